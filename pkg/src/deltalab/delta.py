"""Strided delta correction of sparse attention outputs.

A sparse method's output is corrected by densely recomputing every
``gamma``-th query row, taking the difference (dense - sparse) at those rows
and propagating it to the rows that follow. A dense block at the end of the
sequence keeps the corrected region a multiple of ``gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .attention import (
    AttentionProblem,
    AttentionResult,
    SparsityPattern,
    dense_rows,
    sparse_attention,
)


@dataclass(frozen=True)
class Repeat:
    name = "repeat"


@dataclass(frozen=True)
class Linear:
    name = "linear"


@dataclass(frozen=True)
class Ema:
    beta: float

    name = "ema"

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"Ema beta must lie in (0, 1], got {self.beta}")


@dataclass(frozen=True)
class AbgFilter:
    """Position/velocity/acceleration smoothing with gains alpha, beta, g."""

    alpha: float
    beta: float
    g: float

    name = "abg"

    def __post_init__(self):
        if not all(np.isfinite([self.alpha, self.beta, self.g])):
            raise ValueError(f"AbgFilter coefficients must be finite, got {self}")


Imputation = Repeat | Linear | Ema | AbgFilter


def imputation_label(imp: Imputation) -> str:
    if isinstance(imp, Ema):
        return f"ema({imp.beta:g})"
    if isinstance(imp, AbgFilter):
        return f"abg({imp.alpha:g},{imp.beta:g},{imp.g:g})"
    return imp.name


@dataclass(frozen=True)
class DeltaConfig:
    gamma: int
    tail_dense: int | None = None
    imputation: Imputation = Repeat()

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        if self.tail_dense is not None and self.tail_dense < 0:
            raise ValueError(f"tail_dense must be >= 0, got {self.tail_dense}")

    def tail_for(self, n: int) -> int:
        """Size of the dense tail block for a length-``n`` sequence."""
        if self.tail_dense is not None:
            tail = self.tail_dense
        else:
            # shorter than one stride: row 0 alone governs every row
            tail = n % self.gamma if n >= self.gamma else 0
        if tail >= n:
            raise ValueError(f"tail block of {tail} rows leaves no strided region in N={n}")
        return tail


@dataclass(frozen=True)
class RowSelection:
    stride: np.ndarray
    tail: np.ndarray
    gamma: int

    @property
    def rows(self) -> np.ndarray:
        return np.concatenate([self.stride, self.tail])

    def governing(self, n: int) -> np.ndarray:
        """For each row, the stride row whose delta it receives (-1 inside the tail)."""
        g = (np.arange(n) // self.gamma) * self.gamma
        g[self.tail] = -1
        return g


def select_query_rows(n: int, cfg: DeltaConfig) -> RowSelection:
    """Stride rows ``{0, gamma, 2*gamma, ...}`` below the tail block, plus the tail rows."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    tail = cfg.tail_for(n)
    stride = np.arange(0, n - tail, cfg.gamma, dtype=np.int64)
    return RowSelection(stride=stride, tail=np.arange(n - tail, n, dtype=np.int64), gamma=cfg.gamma)


def strided_dense_rows(p: AttentionProblem, rows, keep_weights: bool = True) -> AttentionResult:
    """Query-sparse, key-dense attention: full causal rows at ``rows`` only."""
    return dense_rows(p, rows, keep_weights=keep_weights)


@dataclass(frozen=True)
class DeltaTrace:
    selected_rows: np.ndarray
    tail_rows: np.ndarray
    deltas: np.ndarray
    dense_rows: AttentionResult
    gamma: int

    @property
    def stride_rows(self) -> np.ndarray:
        return self.selected_rows[: self.selected_rows.size - self.tail_rows.size]

    @property
    def stride_deltas(self) -> np.ndarray:
        return self.deltas[: self.stride_rows.size]


def _repeat(stride_deltas: np.ndarray, n: int, gamma: int) -> np.ndarray:
    out = np.repeat(stride_deltas, gamma, axis=0)[:n]
    if out.shape[0] < n:
        # rows past the last segment (tail block) keep the last delta
        out = np.vstack([out, np.repeat(stride_deltas[-1:], n - out.shape[0], axis=0)])
    return out


def _linear(stride_deltas: np.ndarray, n: int, gamma: int) -> np.ndarray:
    out = _repeat(stride_deltas, n, gamma)
    beta = np.arange(gamma, dtype=np.float64) / gamma
    for s in range(stride_deltas.shape[0] - 1):
        lo = s * gamma
        seg = (1.0 - beta)[:, None] * stride_deltas[s] + beta[:, None] * stride_deltas[s + 1]
        out[lo: lo + gamma] = seg[: max(0, min(gamma, n - lo))]
    return out


def _ema(stream: np.ndarray, beta: float) -> np.ndarray:
    out = stream.copy()
    for i in range(1, out.shape[0]):
        out[i] = (1.0 - beta) * out[i - 1] + beta * stream[i]
    return out


def _abg(stream: np.ndarray, alpha: float, beta: float, g: float) -> np.ndarray:
    out = np.zeros_like(stream)
    pos = stream[0].copy()
    vel = np.zeros_like(pos)
    acc = np.zeros_like(pos)
    out[0] = stream[0]
    for i in range(1, stream.shape[0]):
        p_hat = pos + vel + 0.5 * acc
        v_hat = vel + acc
        r = stream[i] - p_hat
        pos = p_hat + alpha * r
        vel = v_hat + beta * r
        acc = acc + g * r
        out[i] = pos
    return out


def impute_deltas(trace: DeltaTrace, n: int, cfg: DeltaConfig) -> np.ndarray:
    """Expand the stride-row deltas to one correction vector per row (n x d)."""
    return _impute(trace.stride_deltas, n, cfg)


def _impute(sd: np.ndarray, n: int, cfg: DeltaConfig) -> np.ndarray:
    if sd.shape[0] == 0:
        raise ValueError("no stride deltas to impute")
    imp = cfg.imputation
    gamma = cfg.gamma
    if isinstance(imp, Linear):
        return _linear(sd, n, gamma)
    stream = _repeat(sd, n, gamma)
    if isinstance(imp, Repeat):
        return stream
    if isinstance(imp, Ema):
        return _ema(stream, imp.beta)
    if isinstance(imp, AbgFilter):
        return _abg(stream, imp.alpha, imp.beta, imp.g)
    raise TypeError(f"unknown imputation {imp!r}")


def _corrected_entries(sparse: AttentionResult, rows: np.ndarray) -> np.ndarray:
    entries = sparse.computed_entries.copy()
    entries[rows] = rows + 1
    return entries


def _splice_dense(base: AttentionResult, dense: AttentionResult, output: np.ndarray,
                  weights: np.ndarray | None) -> AttentionResult:
    rows = dense.rows
    output[rows] = dense.output
    z = base.row_normalizers.copy()
    mx = base.row_max.copy()
    z[rows] = dense.row_normalizers
    mx[rows] = dense.row_max
    if weights is not None and dense.weights is not None:
        weights[rows] = dense.weights
    return AttentionResult(
        output=output,
        row_normalizers=z,
        row_max=mx,
        computed_entries=_corrected_entries(base, rows),
        weights=weights,
    )


def delta_attention(p: AttentionProblem, pat: SparsityPattern, cfg: DeltaConfig,
                    sparse: AttentionResult | None = None,
                    keep_weights: bool = True) -> tuple[AttentionResult, DeltaTrace]:
    """Sparse attention plus the propagated stride-row correction.

    Stride and tail rows carry their dense rows directly; every other row is
    ``sparse_i + imputed_delta_i``. Pass ``sparse`` to reuse an existing
    sparse result for the same problem and pattern.
    """
    if sparse is None:
        sparse = sparse_attention(p, pat, keep_weights=keep_weights)
    sel = select_query_rows(p.n, cfg)
    rows = sel.rows
    dense = strided_dense_rows(p, rows, keep_weights=keep_weights)
    deltas = dense.output - sparse.output[rows]
    trace = DeltaTrace(selected_rows=rows, tail_rows=sel.tail, deltas=deltas,
                       dense_rows=dense, gamma=cfg.gamma)

    correction = impute_deltas(trace, p.n, cfg)
    output = sparse.output + correction

    weights = None
    if keep_weights and sparse.weights is not None and dense.weights is not None:
        # every imputation mode is linear in the delta stream, so imputing the
        # attention-row deltas gives the rows that actually produced `output`
        w_delta = dense.weights[: sel.stride.size] - sparse.weights[sel.stride]
        weights = sparse.weights + _impute(w_delta, p.n, cfg)

    return _splice_dense(sparse, dense, output, weights), trace


def recompute_attention(p: AttentionProblem, pat: SparsityPattern, cfg: DeltaConfig,
                        sparse: AttentionResult | None = None,
                        keep_weights: bool = True) -> AttentionResult:
    """Sparse attention with stride and tail rows swapped for dense rows; nothing propagated."""
    if sparse is None:
        sparse = sparse_attention(p, pat, keep_weights=keep_weights)
    rows = select_query_rows(p.n, cfg).rows
    dense = strided_dense_rows(p, rows, keep_weights=keep_weights)
    weights = sparse.weights.copy() if (keep_weights and sparse.weights is not None) else None
    return _splice_dense(sparse, dense, sparse.output.copy(), weights)


def with_imputation(cfg: DeltaConfig, imp: Imputation) -> DeltaConfig:
    return replace(cfg, imputation=imp)
