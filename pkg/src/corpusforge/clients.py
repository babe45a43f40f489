"""HTTP clients for the three wire protocols: chat completion, embedding,
and masked-LM scoring. Each protocol also has a Protocol class so tests and
callers can substitute in-process stubs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import requests


class TransportError(RuntimeError):
    """Network/HTTP failure talking to a model endpoint."""


class ChatClient(Protocol):
    def complete(self, messages: Sequence[tuple[str, str]], **params) -> str:
        """Return the model's reply text for a list of (role, content) turns."""
        ...


class EmbedderClient(Protocol):
    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        """Return one raw (possibly unnormalized) vector per input text."""
        ...


@dataclass(frozen=True)
class TokenScore:
    position: int
    token_text: str
    logprob_true_token: float  # natural log, <= 0

    def __post_init__(self):
        if self.logprob_true_token > 0:
            raise ValueError("log probability must be <= 0")


class MlmScorerClient(Protocol):
    max_tokens: int

    def score(self, text: str) -> list[TokenScore]:
        """One TokenScore per position, each scored with that position masked."""
        ...


@dataclass
class HttpChatClient:
    """OpenAI-compatible /v1/chat/completions client.

    Retry is the caller's job: one request per complete() call.
    """

    base_url: str
    model: str = "default"
    temperature: float = 0.7
    max_tokens: int = 512
    token: str | None = None
    timeout: float = 120.0

    @classmethod
    def from_env(cls, **overrides) -> "HttpChatClient":
        url = os.environ.get("CORPUSFORGE_GENERATOR_URL")
        if not url:
            raise TransportError("CORPUSFORGE_GENERATOR_URL is not set")
        token = os.environ.get("CORPUSFORGE_GENERATOR_TOKEN")
        return cls(base_url=url, token=token, **overrides)

    def complete(self, messages: Sequence[tuple[str, str]], **params) -> str:
        body = {
            "model": params.get("model", self.model),
            "messages": [{"role": r, "content": c} for r, c in messages],
            "temperature": params.get("temperature", self.temperature),
            "max_tokens": params.get("max_tokens", self.max_tokens),
        }
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = requests.post(
                f"{self.base_url.rstrip('/')}/v1/chat/completions",
                json=body, headers=headers, timeout=self.timeout,
            )
            resp.raise_for_status()
            data = resp.json()
            return data["choices"][0]["message"]["content"]
        except (requests.RequestException, KeyError, IndexError, ValueError) as e:
            raise TransportError(f"chat completion failed: {e}") from e


@dataclass
class HttpEmbedderClient:
    """Client for POST /embed: {"texts": [...]} -> {"vectors": [...], "dim": D}."""

    base_url: str
    timeout: float = 120.0

    @classmethod
    def from_env(cls, **overrides) -> "HttpEmbedderClient":
        url = os.environ.get("CORPUSFORGE_EMBED_URL")
        if not url:
            raise TransportError("CORPUSFORGE_EMBED_URL is not set")
        return cls(base_url=url, **overrides)

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        try:
            resp = requests.post(
                f"{self.base_url.rstrip('/')}/embed",
                json={"texts": list(texts)}, timeout=self.timeout,
            )
            resp.raise_for_status()
            data = resp.json()
            return data["vectors"]
        except (requests.RequestException, KeyError, ValueError) as e:
            raise TransportError(f"embedding request failed: {e}") from e


@dataclass
class HttpMlmScorer:
    """Client for GET /mlm/info and POST /mlm/score.

    /mlm/score returns per-position natural-log probabilities of the true
    token when that position is masked.
    """

    base_url: str
    timeout: float = 300.0
    max_tokens: int = field(init=False, default=512)

    def __post_init__(self):
        try:
            resp = requests.get(f"{self.base_url.rstrip('/')}/mlm/info", timeout=self.timeout)
            resp.raise_for_status()
            self.max_tokens = int(resp.json()["max_tokens"])
        except (requests.RequestException, KeyError, ValueError) as e:
            raise TransportError(f"mlm info request failed: {e}") from e

    @classmethod
    def from_env(cls, **overrides) -> "HttpMlmScorer":
        url = os.environ.get("CORPUSFORGE_MLM_URL")
        if not url:
            raise TransportError("CORPUSFORGE_MLM_URL is not set")
        return cls(base_url=url, **overrides)

    def score(self, text: str) -> list[TokenScore]:
        try:
            resp = requests.post(
                f"{self.base_url.rstrip('/')}/mlm/score",
                json={"text": text}, timeout=self.timeout,
            )
            resp.raise_for_status()
            data = resp.json()
            tokens, logprobs = data["tokens"], data["logprobs"]
        except (requests.RequestException, KeyError, ValueError) as e:
            raise TransportError(f"mlm score request failed: {e}") from e
        return [
            TokenScore(position=i, token_text=t, logprob_true_token=min(float(lp), 0.0))
            for i, (t, lp) in enumerate(zip(tokens, logprobs))
        ]
