import math

import numpy as np
import pytest
import xxhash

from corpusforge.clients import TokenScore, TransportError
from corpusforge.model import Conversation, Corpus, Message, Origin


def msg(mid, role, text, **kw):
    return Message(id=mid, role=role, text=text, **kw)


def conv(cid, roles_texts, origin=Origin.FAUNO, provenance=None):
    messages = tuple(
        Message(id=f"{cid}.m{i}", role=role, text=text)
        for i, (role, text) in enumerate(roles_texts)
    )
    return Conversation(id=cid, origin=origin, messages=messages,
                        provenance=provenance or {})


def corpus(*convs):
    return Corpus(tuple(convs))


class ScriptedChatClient:
    """Replays a fixed list of replies; records every request."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests = []
        self.calls = 0

    def complete(self, messages, **params):
        self.requests.append((tuple(messages), params))
        if not self.replies:
            raise TransportError("script exhausted")
        self.calls += 1
        return self.replies.pop(0)


class EchoChatClient:
    """Deterministic reply derived from the prompt hash."""

    def __init__(self):
        self.calls = 0

    def complete(self, messages, **params):
        self.calls += 1
        digest = xxhash.xxh64(messages[-1][1].encode(), seed=0).intdigest()
        return f"Messaggio generato {digest % 100000} numero {self.calls}"


def text_vector(text, dim=8):
    """Deterministic pseudo-random unit vector per distinct text."""
    seed = xxhash.xxh64(text.encode("utf-8"), seed=0).intdigest() % (2**32)
    rng = np.random.RandomState(seed)
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).tolist()


class HashEmbedder:
    """Embeds each distinct text to a stable pseudo-random unit vector."""

    def __init__(self, dim=8):
        self.dim = dim

    def embed_batch(self, texts):
        return [text_vector(t, self.dim) for t in texts]


class ScriptedEmbedder:
    """Maps exact texts to fixed vectors; falls back to hash vectors."""

    def __init__(self, mapping, dim=8):
        self.mapping = dict(mapping)
        self.dim = dim

    def embed_batch(self, texts):
        return [
            list(self.mapping[t]) if t in self.mapping else text_vector(t, self.dim)
            for t in texts
        ]


class UniformScorer:
    """Every true token gets probability 1/V: NLL is exactly ln(V)."""

    max_tokens = 512

    def __init__(self, vocab_size):
        self.vocab_size = vocab_size

    def score(self, text):
        tokens = text.split()
        lp = -math.log(self.vocab_size)
        return [TokenScore(i, t, lp) for i, t in enumerate(tokens)]


class TableScorer:
    """Per-token logprobs from a text -> [logprob] table (whitespace tokens)."""

    max_tokens = 512

    def __init__(self, table, default_logprob=-1.0):
        self.table = dict(table)
        self.default_logprob = default_logprob

    def score(self, text):
        tokens = text.split()
        if text in self.table:
            lps = self.table[text]
        else:
            lps = [self.default_logprob] * len(tokens)
        return [
            TokenScore(i, t, lp)
            for i, (t, lp) in enumerate(zip(tokens, lps))
        ]


class ConstantScorer:
    """Same logprob for every token of every text."""

    def __init__(self, logprob, max_tokens=512):
        self.logprob = logprob
        self.max_tokens = max_tokens

    def score(self, text):
        return [TokenScore(i, t, self.logprob) for i, t in enumerate(text.split())]


@pytest.fixture
def hash_embedder():
    return HashEmbedder()
