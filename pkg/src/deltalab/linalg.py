"""Dense numeric substrate shared by every other module.

Matrices are plain ``numpy.ndarray`` objects of dtype float64; the helpers
here validate shape and finiteness at the boundary and never mutate inputs.
"""

from __future__ import annotations

import warnings
from collections import Counter

import numpy as np

# Incremented whenever a metric hits an undefined case and falls back to its
# sentinel (zero-norm cosine, constant-rank spearman).
DEGENERATE = Counter()


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class EmptySupportError(ValueError):
    """A softmax was requested over an empty set of entries."""


class DegenerateValueWarning(RuntimeWarning):
    """A metric was undefined and a sentinel value was returned instead."""


def flag_degenerate(kind: str, message: str) -> None:
    DEGENERATE[kind] += 1
    warnings.warn(message, DegenerateValueWarning, stacklevel=3)


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def as_vector(x, name: str = "vector") -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def masked_softmax_row(scores, mask) -> tuple[np.ndarray, float, float]:
    """Softmax of ``scores`` restricted to ``mask``.

    Returns ``(probs, normalizer, max_score)`` where ``normalizer`` is the sum
    of ``exp(score - max_score)`` over the masked entries and ``probs`` is zero
    outside the mask.
    """
    s = as_vector(scores, "scores")
    m = np.asarray(mask, dtype=bool)
    if m.shape != s.shape:
        raise DimensionError(f"mask shape {m.shape} does not match scores {s.shape}")
    if not m.any():
        raise EmptySupportError("mask selects no entries")
    max_score = float(s[m].max())
    e = np.where(m, np.exp(np.where(m, s - max_score, 0.0)), 0.0)
    z = float(e.sum())
    return e / z, z, max_score


def masked_softmax(scores: np.ndarray, mask: np.ndarray):
    """Row-wise :func:`masked_softmax_row` over a whole score matrix.

    Returns ``(probs, normalizers, row_max)``.
    """
    if scores.shape != mask.shape:
        raise DimensionError(f"mask shape {mask.shape} does not match scores {scores.shape}")
    if not mask.any(axis=1).all():
        raise EmptySupportError("some row of the mask selects no entries")
    row_max = np.where(mask, scores, -np.inf).max(axis=1)
    shifted = np.where(mask, scores - row_max[:, None], -np.inf)
    e = np.exp(shifted)
    z = e.sum(axis=1)
    return e / z[:, None], z, row_max


def cosine(u, v) -> float:
    """Cosine similarity; 0.0 (flagged) when either vector has zero norm."""
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    if u.shape != v.shape:
        raise DimensionError(f"length mismatch: {u.shape[0]} vs {v.shape[0]}")
    uu = float(u @ u)
    vv = float(v @ v)
    if uu == 0.0 or vv == 0.0:
        flag_degenerate("cosine", "cosine of a zero-norm vector; returning 0.0")
        return 0.0
    # sqrt(uu * vv) keeps cosine(u, u) == 1.0 exactly
    c = float(u @ v) / np.sqrt(uu * vv)
    return float(min(1.0, max(-1.0, c)))


def row_cosines(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine of each row pair of two equally shaped matrices.

    Zero-norm rows produce the 0.0 sentinel, same as :func:`cosine`.
    """
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    ab = np.einsum("ij,ij->i", a, b)
    denom = np.sqrt(aa * bb)
    zero = denom == 0.0
    if zero.any():
        flag_degenerate("cosine", f"{int(zero.sum())} zero-norm rows; cosine set to 0.0")
    out = np.divide(ab, denom, out=np.zeros_like(ab), where=~zero)
    return np.clip(out, -1.0, 1.0)
