"""Remainder decomposition of the dense-minus-sparse difference for one row.

For a query row with pre-softmax scores ``s`` and a selected key set ``S``
(everything else is the "head" the sparse method drops)::

    H = sum_{j not in S} exp(s_j)        T = sum_{j in S} exp(s_j)
    a_j = exp(s_j) / (H + T)             a*_j = exp(s_j) / T   (j in S)
    delta = a . v - a* . v = sum_{j not in S} a_j v_j + R
    R = -(H / (H + T)) * sum_{j in S} a*_j v_j
    |R| <= (H / (H + T)) * max_{j in S} |v_j|

``H`` and ``T`` share one max-stabilizer so their ratio is exact.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .attention import AttentionProblem, SparsityPattern, pattern_mask
from .linalg import DimensionError


@dataclass(frozen=True)
class BoundRecord:
    row: int
    column: int
    head_sum_H: float
    tail_sum_T: float
    tail_max: float
    remainder_R: float
    closed_form_R: float
    bound: float
    head_contribution: float
    delta: float
    empirical_delta_error: float

    @property
    def head_fraction(self) -> float:
        return self.head_sum_H / (self.head_sum_H + self.tail_sum_T)


def decompose_scores(scores, selected, values, row: int = 0, column: int = 0) -> BoundRecord:
    """Decompose one (scores, value column) pair against a selected key set.

    ``scores`` and ``values`` cover the causal keys of the row only.
    """
    s = np.asarray(scores, dtype=np.float64)
    sel = np.asarray(selected, dtype=bool)
    v = np.asarray(values, dtype=np.float64)
    if not (s.shape == sel.shape == v.shape) or s.ndim != 1:
        raise DimensionError(f"scores {s.shape}, selection {sel.shape}, values {v.shape} disagree")
    if not sel.any():
        raise ValueError("selected key set is empty")
    e = np.exp(s - s.max())
    H = float(e[~sel].sum())
    T = float(e[sel].sum())
    Z = H + T
    a = e / Z
    # T can underflow when every selected score sits far below the row max;
    # the renormalized weights get their own stabilizer
    e_sel = np.zeros_like(s)
    e_sel[sel] = np.exp(s[sel] - s[sel].max())
    a_star = e_sel / e_sel.sum()
    delta = float(a @ v - a_star @ v)
    head = float(a[~sel] @ v[~sel])
    R = delta - head
    frac = H / Z
    closed = -frac * float(a_star[sel] @ v[sel])
    tail_max = float(np.abs(v[sel]).max())
    return BoundRecord(
        row=row, column=column, head_sum_H=H, tail_sum_T=T, tail_max=tail_max,
        remainder_R=R, closed_form_R=closed, bound=frac * tail_max,
        head_contribution=head, delta=delta, empirical_delta_error=abs(R),
    )


def lemma_decompose(p: AttentionProblem, pat: SparsityPattern, row: int,
                    value_col: int) -> BoundRecord:
    if not 0 <= row < p.n:
        raise IndexError(f"row {row} outside [0, {p.n})")
    if not 0 <= value_col < p.d:
        raise IndexError(f"value column {value_col} outside [0, {p.d})")
    scores = p.scores([row])
    mask = pattern_mask(p, pat, rows=[row], scores=scores)[0, : row + 1]
    return decompose_scores(scores[0, : row + 1], mask, p.v[: row + 1, value_col],
                            row=row, column=value_col)


@dataclass(frozen=True)
class BoundRow:
    """Per-row summary across value columns (max |R|, max bound)."""

    pattern: str
    row: int
    head_sum_H: float
    tail_sum_T: float
    head_fraction: float
    max_abs_R: float
    max_bound: float
    max_tail: float
    max_abs_head_contribution: float
    max_empirical_delta_error: float
    satisfied: bool
    # selected keys are exactly the top-|S| scores (the bound's tight regime);
    # False for window patterns that drop some high-scoring keys
    exact_topk: bool


@dataclass
class BoundReport:
    rows: list[BoundRow] = field(default_factory=list)
    columns: list[BoundRecord] = field(default_factory=list)

    def for_pattern(self, label: str) -> list[BoundRow]:
        return [r for r in self.rows if r.pattern == label]

    def mean_bound(self, label: str) -> float:
        rows = self.for_pattern(label)
        return float(np.mean([r.max_bound for r in rows])) if rows else float("nan")

    def satisfaction_rate(self) -> float:
        if not self.rows:
            return 1.0
        return sum(r.satisfied for r in self.rows) / len(self.rows)

    def to_records(self) -> list[dict]:
        return [asdict(r) for r in self.rows]


def _is_top_selection(s: np.ndarray, sel: np.ndarray) -> bool:
    if sel.all():
        return True
    return bool(s[sel].min() >= s[~sel].max())


def _row_records(p: AttentionProblem, mask_row: np.ndarray, scores_row: np.ndarray,
                 row: int) -> list[BoundRecord]:
    sel = mask_row[: row + 1]
    s = scores_row[: row + 1]
    return [decompose_scores(s, sel, p.v[: row + 1, c], row=row, column=c) for c in range(p.d)]


def bound_sweep(p: AttentionProblem, patterns, rows, verbose: bool = False,
                slack: float = 1e-12) -> BoundReport:
    """Run the decomposition over ``rows`` x every value column x ``patterns``."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("bound_sweep needs at least one row")
    if rows.min() < 0 or rows.max() >= p.n:
        raise IndexError(f"rows must lie in [0, {p.n})")
    report = BoundReport()
    scores = p.scores(rows)
    for pat in patterns:
        masks = pattern_mask(p, pat, rows=rows, scores=scores)
        for idx, row in enumerate(rows.tolist()):
            recs = _row_records(p, masks[idx], scores[idx], row)
            first = recs[0]
            report.rows.append(BoundRow(
                pattern=pat.label,
                row=row,
                head_sum_H=first.head_sum_H,
                tail_sum_T=first.tail_sum_T,
                head_fraction=first.head_fraction,
                max_abs_R=max(abs(r.remainder_R) for r in recs),
                max_bound=max(r.bound for r in recs),
                max_tail=max(r.tail_max for r in recs),
                max_abs_head_contribution=max(abs(r.head_contribution) for r in recs),
                max_empirical_delta_error=max(r.empirical_delta_error for r in recs),
                satisfied=all(abs(r.remainder_R) <= r.bound + slack for r in recs),
                exact_topk=_is_top_selection(scores[idx, : row + 1], masks[idx, : row + 1]),
            ))
            if verbose:
                report.columns.extend(recs)
    return report
