"""Exact cosine-similarity vector store.

Vectors are unit-normalized at ingest, so cosine similarity is a plain dot
product. Search is brute force and exact: at the corpus scales involved
(hundreds of thousands of vectors at most) a flat index is tractable and
the 0.9-threshold diversity filter needs exact semantics.

Concurrency: append-only with integer ids assigned in order; a reader that
captured the count sees a stable prefix, appends never mutate existing
entries.
"""

from __future__ import annotations

import csv
import json
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clients import EmbedderClient
from .model import Corpus

IDENTITY_EPSILON = 1e-6


class DimensionMismatch(ValueError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"expected dimension {expected}, got {got}")
        self.expected = expected
        self.got = got


class EmptyStore(LookupError):
    pass


class VectorStore:
    """Append-only flat index of unit vectors with exact kNN queries."""

    def __init__(self, dimension: int = 512):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self._capacity = 1024
        self._data = np.zeros((self._capacity, dimension), dtype=np.float64)
        self._count = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self._count

    def add(self, vector: Sequence[float]) -> int:
        """Normalize and append; returns the new entry's id (0, 1, 2, ...)."""
        v = np.asarray(vector, dtype=np.float64)
        if v.shape != (self.dimension,):
            raise DimensionMismatch(self.dimension, v.shape[-1] if v.ndim else 0)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise ValueError("cannot normalize a zero vector")
        v = v / norm
        with self._lock:
            if self._count == self._capacity:
                self._capacity *= 2
                grown = np.zeros((self._capacity, self.dimension), dtype=np.float64)
                grown[: self._count] = self._data[: self._count]
                self._data = grown
            self._data[self._count] = v
            self._count += 1
            return self._count - 1

    def _similarities(self, query: Sequence[float], n: int) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64)
        if q.shape != (self.dimension,):
            raise DimensionMismatch(self.dimension, q.shape[-1] if q.ndim else 0)
        norm = float(np.linalg.norm(q))
        if norm == 0.0:
            raise ValueError("cannot normalize a zero query")
        # Row-wise multiply+reduce, not a BLAS matrix-vector product: each
        # row's rounding must be independent of the store size so that a
        # fixed (query, id) similarity never changes as entries are appended.
        return np.sum(self._data[:n] * (q / norm), axis=1)

    def max_similarity(self, query: Sequence[float]) -> tuple[float, int]:
        """Maximum cosine similarity over all entries and its arg-max id;
        ties go to the smallest id. Raises EmptyStore on an empty store."""
        n = self._count
        if n == 0:
            raise EmptyStore("vector store is empty")
        sims = self._similarities(query, n)
        best = int(np.argmax(sims))  # argmax takes the first (smallest) id on ties
        return float(sims[best]), best

    def knn(
        self,
        query: Sequence[float],
        k: int,
        exclude_identical: bool = False,
        identity_epsilon: float = IDENTITY_EPSILON,
    ) -> list[tuple[int, float]]:
        """Top-k entries by similarity, descending, ties by ascending id.

        With exclude_identical, entries at similarity >= 1 - identity_epsilon
        are skipped before ranking. Returns fewer than k on a small store.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        n = self._count
        if n == 0:
            return []
        sims = self._similarities(query, n)
        candidates = [
            (i, float(sims[i]))
            for i in range(n)
            if not (exclude_identical and sims[i] >= 1.0 - identity_epsilon)
        ]
        candidates.sort(key=lambda t: (-t[1], t[0]))
        return candidates[:k]

    def vector(self, vector_id: int) -> np.ndarray:
        if not 0 <= vector_id < self._count:
            raise IndexError(f"no vector with id {vector_id}")
        return self._data[vector_id].copy()

    # --- persistence: <name>.vecs (raw little-endian float32) + JSON header

    def save(self, path: str) -> None:
        with self._lock:
            n = self._count
            data = self._data[:n].astype("<f4")
        data.tofile(path)
        with open(f"{path}.json", "w", encoding="utf-8") as f:
            json.dump({"dimension": self.dimension, "count": n}, f)
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "VectorStore":
        with open(f"{path}.json", "r", encoding="utf-8") as f:
            header = json.load(f)
        dim, count = int(header["dimension"]), int(header["count"])
        raw = np.fromfile(path, dtype="<f4")
        if raw.size != dim * count:
            raise ValueError(
                f"store file {path} has {raw.size} floats, header says {dim * count}"
            )
        store = cls(dimension=dim)
        for row in raw.reshape(count, dim).astype(np.float64):
            store.add(row)
        return store


@dataclass(frozen=True)
class HistogramSummary:
    bins: list[tuple[float, float, int]]  # (bin_left, bin_right, count)
    mean: float
    stddev: float
    n: int

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["bin_left", "bin_right", "count"])
            for left, right, count in self.bins:
                writer.writerow([f"{left:.6f}", f"{right:.6f}", count])
            writer.writerow([])
            writer.writerow(["mean", "stddev", "n"])
            writer.writerow([
                f"{self.mean:.6f}" if self.n else "",
                f"{self.stddev:.6f}" if self.n else "",
                self.n,
            ])


def histogram(values: Sequence[float], bins: int, lo: float, hi: float) -> HistogramSummary:
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins, range=(lo, hi))
    rows = [
        (float(edges[i]), float(edges[i + 1]), int(counts[i]))
        for i in range(len(counts))
    ]
    if len(values):
        mean = float(np.mean(values))
        stddev = float(np.std(values))
    else:
        mean = stddev = float("nan")
    return HistogramSummary(bins=rows, mean=mean, stddev=stddev, n=len(values))


def distance_histogram(
    corpus: Corpus,
    embedder: EmbedderClient,
    k: int = 10,
    bins: int = 50,
    lo: float = 0.0,
    hi: float = 2.0,
) -> HistogramSummary:
    """Embed every message, find each message's k nearest neighbors
    (excluding identical embeddings), and histogram the cosine distances
    (1 - similarity). Mirrors the corpus-cohesiveness diagnostic."""
    texts = [m.text for conv in corpus.conversations for m in conv.messages]
    if not texts:
        raise ValueError("corpus has no messages")
    vectors = embedder.embed_batch(texts)
    store = VectorStore(dimension=len(vectors[0]))
    for v in vectors:
        store.add(v)
    distances: list[float] = []
    for i in range(len(store)):
        for _, sim in store.knn(store.vector(i), k=k, exclude_identical=True):
            distances.append(1.0 - sim)
    return histogram(distances, bins=bins, lo=lo, hi=hi)
