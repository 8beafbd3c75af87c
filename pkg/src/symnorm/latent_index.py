"""Exact k-nearest-neighbor search over invariant embeddings.

Neighborhoods stand in for equivalence classes of the invariant encoder.
The query point itself is part of its own neighborhood. Ties are broken by
ascending sample index, so results are fully deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

METRICS = ("cosine", "euclidean")
BLOCK_ROWS = 512


@dataclass(frozen=True)
class IndexConfig:
    k: int = 25
    metric: str = "cosine"

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}")


class Index:
    """Immutable embedding table. Build with :func:`build_index`."""

    def __init__(self, embeddings):
        z = np.array(embeddings, dtype=float)
        if z.ndim != 2 or len(z) == 0:
            raise DataError(f"embeddings must be a non-empty 2D array, got shape {z.shape}")
        if not np.all(np.isfinite(z)):
            raise DataError("embeddings must be finite")
        norms = np.linalg.norm(z, axis=1)
        unit = np.divide(z, norms[:, None], out=np.zeros_like(z), where=norms[:, None] > 0)
        z.flags.writeable = False
        unit.flags.writeable = False
        self.embeddings = z
        self._unit = unit
        self._has_zero = bool(np.any(norms == 0))

    def __len__(self):
        return len(self.embeddings)

    @property
    def dim(self):
        return self.embeddings.shape[1]

    def distances(self, queries, metric):
        """Distance rows from each query to every stored embedding."""
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        if q.shape[1] != self.dim:
            raise DataError(f"query dimension {q.shape[1]} != index dimension {self.dim}")
        if metric == "cosine":
            qn = np.linalg.norm(q, axis=1)
            if np.any(qn == 0):
                raise DataError("zero query vector has no cosine direction")
            if self._has_zero:
                raise DataError("index holds a zero embedding; cosine distance undefined")
            return 1.0 - (q / qn[:, None]) @ self._unit.T
        diff = q[:, None, :] - self.embeddings[None, :, :]
        return np.sqrt(np.einsum("qnd,qnd->qn", diff, diff))


def build_index(data) -> Index:
    """Index a dataset (anything with a ``z`` array) or a raw embedding matrix."""
    return Index(getattr(data, "z", data))


def _smallest_k(row: np.ndarray, k: int) -> np.ndarray:
    if k < len(row):
        cutoff = np.partition(row, k - 1)[k - 1]
        cand = np.flatnonzero(row <= cutoff)
    else:
        cand = np.arange(len(row))
    order = np.lexsort((cand, row[cand]))
    return cand[order[:k]]


def query(index: Index, z, cfg: IndexConfig = IndexConfig()) -> np.ndarray:
    """Indices of the ``k`` nearest stored embeddings, nearest first."""
    return query_many(index, np.atleast_2d(np.asarray(z, dtype=float)), cfg)[0]


def query_many(index: Index, zs, cfg: IndexConfig = IndexConfig()) -> np.ndarray:
    """Blocked batch query; returns an ``(m, k)`` integer array."""
    if cfg.k > len(index):
        raise ConfigError(f"k={cfg.k} exceeds dataset size {len(index)}")
    zs = np.atleast_2d(np.asarray(zs, dtype=float))
    out = np.empty((len(zs), cfg.k), dtype=np.int64)
    rows = BLOCK_ROWS
    if cfg.metric == "euclidean":
        # pairwise differences are materialized; keep a block under ~32 MB
        rows = max(1, min(BLOCK_ROWS, 4_000_000 // (len(index) * index.dim)))
    for start in range(0, len(zs), rows):
        block = index.distances(zs[start:start + rows], cfg.metric)
        for i, row in enumerate(block):
            out[start + i] = _smallest_k(row, cfg.k)
    return out
