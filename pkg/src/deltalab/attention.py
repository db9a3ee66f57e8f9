"""Reference attention: dense causal, masked sparse, oracle top-k, dense decode.

Every computation runs in float64 on whole matrices; the implicit N x N
attention matrix is materialized, which is fine at desk scale and lets the
metrics reconstruct attention rows afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import DimensionError, as_matrix, as_vector, masked_softmax


@dataclass(frozen=True)
class AttentionProblem:
    """One head's already-projected Q, K, V (each N x d)."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    scale: float | None = None

    def __post_init__(self):
        q = as_matrix(self.q, "q")
        k = as_matrix(self.k, "k")
        v = as_matrix(self.v, "v")
        if not (q.shape == k.shape == v.shape):
            raise DimensionError(f"q, k, v shapes differ: {q.shape}, {k.shape}, {v.shape}")
        n, d = q.shape
        if n < 1 or d < 1:
            raise DimensionError(f"need N >= 1 and d >= 1, got {q.shape}")
        scale = 1.0 / math.sqrt(d) if self.scale is None else float(self.scale)
        if not scale > 0:
            raise ValueError(f"scale must be positive, got {scale}")
        for name, arr in (("q", q), ("k", k), ("v", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "scale", scale)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def d(self) -> int:
        return self.q.shape[1]

    def scores(self, rows=None) -> np.ndarray:
        """Scaled pre-softmax scores ``scale * q_i . k_j`` (future entries included)."""
        q = self.q if rows is None else self.q[np.asarray(rows)]
        return self.scale * (q @ self.k.T)


@dataclass(frozen=True)
class SinkWindow:
    sink: int
    window: int

    def __post_init__(self):
        if self.sink < 0 or self.window < 1:
            raise ValueError(f"SinkWindow needs sink >= 0 and window >= 1, got {self}")

    @property
    def label(self) -> str:
        return f"sw({self.sink},{self.window})"


@dataclass(frozen=True)
class OracleTopK:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"OracleTopK needs k >= 1, got {self.k}")

    @property
    def label(self) -> str:
        return f"topk({self.k})"


@dataclass(frozen=True, eq=False)
class Explicit:
    mask: np.ndarray
    name: str = "explicit"

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"explicit mask must be square, got {m.shape}")
        if np.triu(m, 1).any():
            raise ValueError("explicit mask selects future keys (j > i)")
        if not m.any(axis=1).all():
            raise ValueError("explicit mask has a row with no selected keys")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @classmethod
    def full(cls, n: int) -> "Explicit":
        return cls(np.tril(np.ones((n, n), dtype=bool)), name="full")

    @property
    def label(self) -> str:
        return self.name


SparsityPattern = SinkWindow | OracleTopK | Explicit


@dataclass(frozen=True)
class AttentionResult:
    """Attention output plus the bookkeeping the metrics need.

    ``rows`` is None for a full result; for a row-restricted result it lists
    the absolute row index of each stored row. ``weights`` holds the
    (effective) attention rows that produced ``output`` when kept.
    """

    output: np.ndarray
    row_normalizers: np.ndarray
    row_max: np.ndarray
    computed_entries: np.ndarray
    weights: np.ndarray | None = field(default=None, repr=False)
    rows: np.ndarray | None = None

    @property
    def row_index(self) -> np.ndarray:
        if self.rows is None:
            return np.arange(self.output.shape[0])
        return self.rows


def causal_mask(n: int, rows=None) -> np.ndarray:
    r = np.arange(n) if rows is None else np.asarray(rows)
    return np.arange(n)[None, :] <= r[:, None]


def sink_window_mask(n: int, sink: int, window: int, rows=None) -> np.ndarray:
    r = (np.arange(n) if rows is None else np.asarray(rows))[:, None]
    j = np.arange(n)[None, :]
    return (j <= r) & ((j < sink) | (j > r - window))


def topk_mask(scores: np.ndarray, k: int, rows=None) -> np.ndarray:
    """Per row, the ``k`` largest causal scores; ties go to the larger index."""
    m, n = scores.shape
    r = np.arange(m) if rows is None else np.asarray(rows)
    j = np.arange(n)
    future = j[None, :] > r[:, None]
    neg = np.where(future, np.inf, -scores)
    # lexsort: last key is primary -> sort by -score, then by -index
    order = np.lexsort((np.broadcast_to(-j, scores.shape), neg), axis=-1)
    keep = np.minimum(k, r + 1)
    ranked = np.arange(n)[None, :] < keep[:, None]
    mask = np.zeros_like(ranked)
    np.put_along_axis(mask, order, ranked, axis=-1)
    return mask


def pattern_mask(p: AttentionProblem, pat: SparsityPattern, rows=None, scores=None) -> np.ndarray:
    """Boolean key-selection mask for ``rows`` (all rows by default)."""
    n = p.n
    if isinstance(pat, SinkWindow):
        return sink_window_mask(n, pat.sink, pat.window, rows)
    if isinstance(pat, OracleTopK):
        if scores is None:
            scores = p.scores(rows)
        return topk_mask(scores, pat.k, rows)
    if isinstance(pat, Explicit):
        if pat.mask.shape != (n, n):
            raise DimensionError(f"explicit mask {pat.mask.shape} does not fit N={n}")
        return pat.mask if rows is None else pat.mask[np.asarray(rows)]
    raise TypeError(f"unknown sparsity pattern {pat!r}")


def _masked_attention(p: AttentionProblem, mask: np.ndarray, scores: np.ndarray,
                      rows=None, keep_weights: bool = True) -> AttentionResult:
    probs, z, row_max = masked_softmax(scores, mask)
    out = probs @ p.v
    return AttentionResult(
        output=out,
        row_normalizers=z,
        row_max=row_max,
        computed_entries=mask.sum(axis=1).astype(np.int64),
        weights=probs if keep_weights else None,
        rows=None if rows is None else np.asarray(rows, dtype=np.int64),
    )


def dense_attention(p: AttentionProblem, keep_weights: bool = True) -> AttentionResult:
    """Causal softmax attention over all keys ``0..i`` for every row ``i``."""
    return _masked_attention(p, causal_mask(p.n), p.scores(), keep_weights=keep_weights)


def dense_rows(p: AttentionProblem, rows, keep_weights: bool = True) -> AttentionResult:
    """Dense causal attention evaluated only at the given query rows."""
    r = np.asarray(rows, dtype=np.int64)
    if r.size and (r.min() < 0 or r.max() >= p.n):
        raise IndexError(f"row indices must lie in [0, {p.n})")
    return _masked_attention(p, causal_mask(p.n, r), p.scores(r), rows=r,
                             keep_weights=keep_weights)


def sparse_attention(p: AttentionProblem, pat: SparsityPattern,
                     keep_weights: bool = True) -> AttentionResult:
    """Attention renormalized over the pattern's selected keys only."""
    scores = p.scores()
    mask = pattern_mask(p, pat, scores=scores)
    return _masked_attention(p, mask, scores, keep_weights=keep_weights)


def decode_step(kv_k, kv_v, q_new, k_new, v_new, scale: float) -> np.ndarray:
    """One generation step: the new query attends densely to cache + itself."""
    q_new = as_vector(q_new, "q_new")
    d = q_new.shape[0]
    k_new = as_vector(k_new, "k_new")
    v_new = as_vector(v_new, "v_new")
    kv_k = np.asarray(kv_k, dtype=np.float64).reshape(-1, d) if np.size(kv_k) == 0 else as_matrix(kv_k, "kv_k")
    kv_v = np.asarray(kv_v, dtype=np.float64).reshape(-1, d) if np.size(kv_v) == 0 else as_matrix(kv_v, "kv_v")
    if kv_k.shape != kv_v.shape or kv_k.shape[1] != d or k_new.shape[0] != d or v_new.shape[0] != d:
        raise DimensionError(
            f"decode shapes disagree: cache k {kv_k.shape}, v {kv_v.shape}, "
            f"q {q_new.shape}, k {k_new.shape}, v {v_new.shape}"
        )
    keys = np.vstack([kv_k, k_new[None, :]])
    values = np.vstack([kv_v, v_new[None, :]])
    s = scale * (keys @ q_new)
    e = np.exp(s - s.max())
    return (e / e.sum()) @ values
