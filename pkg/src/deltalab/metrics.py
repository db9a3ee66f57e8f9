"""Diagnostics: output cosine, attention-row rank correlation, delta locality, cost."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import (
    AttentionProblem,
    AttentionResult,
    Explicit,
    OracleTopK,
    SinkWindow,
    SparsityPattern,
    dense_attention,
    sparse_attention,
)
from .delta import DeltaConfig, select_query_rows
from .linalg import DimensionError, flag_degenerate, row_cosines


def average_ranks(x) -> np.ndarray:
    """1-based ranks with ties sharing the mean of the positions they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], xs.size]
    run_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(x.size, dtype=np.float64)
    ranks[order] = np.repeat(run_rank, ends - starts)
    return ranks


def spearman_rho(a, b) -> float:
    """Spearman correlation (Pearson of average-tied ranks).

    Returns 0.0 and flags a degenerate value when either input is constant.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"spearman needs equal-length vectors, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise ValueError("spearman needs at least two observations")
    ra = average_ranks(a)
    rb = average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    saa = float(ra @ ra)
    sbb = float(rb @ rb)
    if saa == 0.0 or sbb == 0.0:
        flag_degenerate("spearman", "spearman of a constant vector; returning 0.0")
        return 0.0
    rho = float(ra @ rb) / np.sqrt(saa * sbb)
    return float(min(1.0, max(-1.0, rho)))


@dataclass(frozen=True)
class MethodComparison:
    cosines: np.ndarray
    suffix_rows: np.ndarray
    spearman: np.ndarray

    def summary(self) -> dict:
        c, s = self.cosines, self.spearman
        return {
            "cosine_mean": float(c.mean()),
            "cosine_median": float(np.median(c)),
            "cosine_q10": float(np.quantile(c, 0.1)),
            "cosine_q90": float(np.quantile(c, 0.9)),
            "spearman_mean": float(s.mean()) if s.size else float("nan"),
            "spearman_median": float(np.median(s)) if s.size else float("nan"),
            "spearman_q10": float(np.quantile(s, 0.1)) if s.size else float("nan"),
            "spearman_q90": float(np.quantile(s, 0.9)) if s.size else float("nan"),
        }


def compare_methods(p: AttentionProblem, method_out: AttentionResult, suffix_len: int | None = None,
                    dense: AttentionResult | None = None,
                    exclude_unsupported: bool = False) -> MethodComparison:
    """Cosine of every output row against dense, and Spearman over the last rows.

    Attention rows are compared over the causal keys ``0..i``. Entries the
    method did not compute are zeros (ties) unless ``exclude_unsupported``,
    which restricts the comparison to the method's nonzero entries.
    """
    n = p.n
    if suffix_len is None:
        suffix_len = min(128, n)
    if not 0 <= suffix_len <= n:
        raise ValueError(f"suffix_len must lie in [0, {n}], got {suffix_len}")
    if dense is None:
        dense = dense_attention(p)
    cos = row_cosines(method_out.output, dense.output)
    rows = np.arange(n - suffix_len, n)
    rhos = []
    if suffix_len:
        if method_out.weights is None or dense.weights is None:
            raise ValueError("rank correlation needs attention weights; run with keep_weights=True")
        for i in rows.tolist():
            m_row = method_out.weights[i, : i + 1]
            d_row = dense.weights[i, : i + 1]
            if exclude_unsupported:
                keep = m_row != 0.0
                m_row, d_row = m_row[keep], d_row[keep]
            rhos.append(spearman_rho(m_row, d_row) if m_row.size >= 2 else 1.0)
    return MethodComparison(cosines=cos, suffix_rows=rows, spearman=np.asarray(rhos, dtype=np.float64))


@dataclass(frozen=True)
class LocalityProfile:
    offsets: np.ndarray
    mean_cosine: np.ndarray  # NaN where no pair was defined
    defined_pairs: np.ndarray


def delta_locality(p: AttentionProblem, pat: SparsityPattern, gamma_max: int,
                   dense: AttentionResult | None = None,
                   sparse: AttentionResult | None = None) -> LocalityProfile:
    """Mean cosine between (dense - sparse) rows ``i`` and ``i + nu`` for ``nu`` in 0..gamma_max.

    Pairs where either difference vector is exactly zero are skipped.
    """
    if not 0 <= gamma_max < p.n:
        raise ValueError(f"gamma_max must lie in [0, {p.n}), got {gamma_max}")
    if dense is None:
        dense = dense_attention(p, keep_weights=False)
    if sparse is None:
        sparse = sparse_attention(p, pat, keep_weights=False)
    diff = dense.output - sparse.output
    norms = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    nonzero = norms > 0.0
    offsets = np.arange(gamma_max + 1)
    means = np.full(offsets.size, np.nan)
    counts = np.zeros(offsets.size, dtype=np.int64)
    for nu in offsets.tolist():
        a, b = diff[: p.n - nu], diff[nu:]
        ok = nonzero[: p.n - nu] & nonzero[nu:]
        counts[nu] = int(ok.sum())
        if counts[nu]:
            c = np.einsum("ij,ij->i", a[ok], b[ok]) / np.sqrt(
                np.einsum("ij,ij->i", a[ok], a[ok]) * np.einsum("ij,ij->i", b[ok], b[ok]))
            means[nu] = float(np.clip(c, -1.0, 1.0).mean())
    return LocalityProfile(offsets=offsets, mean_cosine=means, defined_pairs=counts)


@dataclass(frozen=True)
class CostAccount:
    """Attention-score entries computed by a method, against the causal triangle.

    ``overhead_entries`` counts what the method adds on top of ``base_entries``
    (the underlying sparse method's entries); zero for plain methods.
    """

    n: int
    dense_entries: int
    method_entries: int
    base_entries: int
    sparsity: float
    flop_ratio_vs_dense: float
    overhead_entries: int
    overhead_fraction: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _account(n: int, method_entries: int, base_entries: int | None = None) -> CostAccount:
    dense = n * (n + 1) // 2
    base = method_entries if base_entries is None else base_entries
    return CostAccount(
        n=n,
        dense_entries=dense,
        method_entries=int(method_entries),
        base_entries=int(base),
        sparsity=1.0 - method_entries / dense,
        flop_ratio_vs_dense=method_entries / dense,
        overhead_entries=int(method_entries - base),
        overhead_fraction=(method_entries - base) / dense,
    )


def cost_account(results: AttentionResult, n: int, base: AttentionResult | None = None) -> CostAccount:
    """Sum computed entries; score and AV FLOPs both scale with this count."""
    entries = int(np.asarray(results.computed_entries, dtype=np.int64).sum())
    base_entries = None if base is None else int(np.asarray(base.computed_entries).sum())
    return _account(n, entries, base_entries)


def pattern_entries(n: int, pat: SparsityPattern) -> np.ndarray:
    """Per-row entry counts of a pattern without materializing any matrix."""
    i = np.arange(n, dtype=np.int64)
    if isinstance(pat, SinkWindow):
        win = np.minimum(i + 1, pat.window)
        # sink keys not already inside the window
        return win + np.minimum(pat.sink, np.maximum(0, i + 1 - pat.window))
    if isinstance(pat, OracleTopK):
        return np.minimum(i + 1, pat.k)
    if isinstance(pat, Explicit):
        return pat.mask.sum(axis=1).astype(np.int64)
    raise TypeError(f"unknown sparsity pattern {pat!r}")


def delta_entries(n: int, pat: SparsityPattern, cfg: DeltaConfig) -> np.ndarray:
    """Per-row entries of the delta method: stride and tail rows become full rows."""
    entries = pattern_entries(n, pat)
    rows = select_query_rows(n, cfg).rows
    entries[rows] = rows + 1
    return entries


def analytic_cost(n: int, pat: SparsityPattern, cfg: DeltaConfig | None = None) -> CostAccount:
    """Cost account of sparse (or delta-corrected, when ``cfg`` is given) attention."""
    base = pattern_entries(n, pat)
    if cfg is None:
        return _account(n, int(base.sum()))
    return _account(n, int(delta_entries(n, pat, cfg).sum()), int(base.sum()))


def _tri(m: int) -> int:
    return m * (m + 1) // 2 if m > 0 else 0


def _excess_sum(first: int, step: int, count: int, c: int) -> int:
    """sum over r = first + t*step (t < count) of max(0, r + 1 - c)."""
    if count <= 0:
        return 0
    # first t with first + t*step + 1 > c
    t0 = 0 if first + 1 > c else (c - 1 - first) // step + 1
    if t0 >= count:
        return 0
    k = count - t0
    return k * (first + 1 - c) + step * (_tri(count - 1) - _tri(t0 - 1))


def sink_window_delta_closed_form(n: int, sink: int, window: int, gamma: int) -> int:
    """Exact total entries of delta on SinkWindow (default tail block) from summation identities."""
    w = min(window, n)
    m = n - w
    sparse = _tri(w) + m * window + _tri(min(sink, m)) + max(0, m - sink) * sink
    # a full row r replaces window + min(sink, r+1-window) keys: excess max(0, r+1-window-sink)
    c = window + sink
    tail = n % gamma if n >= gamma else 0
    extra = _excess_sum(0, gamma, -(-(n - tail) // gamma), c) + _excess_sum(n - tail, 1, tail, c)
    return sparse + extra


def entry_ratio_estimate(n: int, window: int, gamma: int) -> float:
    """Dense-to-delta entry ratio, continuous approximation (N^2/2) / (N w + N^2 / (2 gamma))."""
    return (n * n / 2) / (n * window + n * n / (2 * gamma))


def approx_window_size(context: int, window: int, gamma: int) -> int:
    """Sliding-window size with the same per-row cost as window + strided dense rows."""
    if gamma < 1:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    return window + context // (2 * gamma)
