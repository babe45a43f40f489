"""Model backends: a multilingual sentence embedder and a masked-LM scorer.

Both are thin deterministic wrappers; heavyweight imports happen inside
the constructors so the protocol layer (and its tests) never pay for them.
"""

from __future__ import annotations

from typing import Optional, Protocol, Sequence


class EmbedderBackend(Protocol):
    model_name: str
    dim: int

    def encode(self, texts: Sequence[str]) -> list[list[float]]: ...


class MlmBackend(Protocol):
    model_name: str
    max_tokens: int

    def score(self, text: str) -> tuple[list[str], list[float]]: ...


class SentenceEmbedderBackend:
    """Sentence-transformer embeddings, deterministic eval mode."""

    def __init__(self, model_name: str):
        from sentence_transformers import SentenceTransformer

        self.model_name = model_name
        self._model = SentenceTransformer(model_name, device="cpu")
        self._model.eval()
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: Sequence[str]) -> list[list[float]]:
        vectors = self._model.encode(
            list(texts), convert_to_numpy=True, show_progress_bar=False,
        )
        return [row.tolist() for row in vectors]


class MaskedLmBackend:
    """Leave-one-out masked-LM scoring.

    Every content token is masked one at a time (batched into a single
    forward pass, which does not change the numbers) and the natural-log
    probability of the true token at its masked position is returned.
    Structural tokens ([CLS], [SEP], padding) are contextual only: they
    are never masked or scored.
    """

    def __init__(
        self,
        model_name: str = "",
        max_tokens_cap: Optional[int] = None,
        model=None,
        tokenizer=None,
    ):
        import torch  # noqa: F401  (fail fast if unavailable)
        from transformers import AutoModelForMaskedLM, AutoTokenizer

        if model is None:
            model = AutoModelForMaskedLM.from_pretrained(model_name)
        if tokenizer is None:
            tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model_name = model_name or getattr(model.config, "name_or_path", "mlm")
        self._model = model.eval()
        self._tokenizer = tokenizer
        limit = int(getattr(model.config, "max_position_embeddings", 512))
        tok_limit = getattr(tokenizer, "model_max_length", limit) or limit
        self.max_tokens = min(limit, int(tok_limit))
        if max_tokens_cap is not None:
            self.max_tokens = min(self.max_tokens, max_tokens_cap)

    def score(self, text: str) -> tuple[list[str], list[float]]:
        import torch

        tok = self._tokenizer
        encoded = tok(
            text, return_tensors="pt", truncation=True, max_length=self.max_tokens,
        )
        input_ids = encoded["input_ids"][0]
        attention = encoded["attention_mask"]
        # Structural tokens frame the input and are context-only; [UNK]
        # is a real (if unrecognized) token and still gets scored.
        structural = {
            tid for tid in (
                tok.cls_token_id, tok.sep_token_id,
                tok.pad_token_id, tok.mask_token_id,
            ) if tid is not None
        }
        positions = [
            i for i, tid in enumerate(input_ids.tolist()) if tid not in structural
        ]
        if not positions:
            return [], []

        batch = input_ids.unsqueeze(0).repeat(len(positions), 1).clone()
        for row, pos in enumerate(positions):
            batch[row, pos] = tok.mask_token_id
        with torch.no_grad():
            logits = self._model(
                input_ids=batch,
                attention_mask=attention.repeat(len(positions), 1),
            ).logits
        tokens: list[str] = []
        logprobs: list[float] = []
        for row, pos in enumerate(positions):
            true_id = int(input_ids[pos])
            log_dist = torch.log_softmax(logits[row, pos], dim=-1)
            tokens.append(tok.convert_ids_to_tokens(true_id))
            # log_softmax is <= 0 mathematically; clamp guards float drift.
            logprobs.append(min(float(log_dist[true_id]), 0.0))
        return tokens, logprobs
