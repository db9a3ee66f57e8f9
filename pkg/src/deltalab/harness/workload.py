"""Synthetic and imported Q/K/V workloads.

Random streams come from numpy's Philox4x64-10 counter-based generator. Each
(seed, head, tensor) triple gets its own key ``seed + (4 * head + tensor) << 64``
with the counter starting at zero, so heads are independent and the order in
which heads or tensors are generated never changes a value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..attention import AttentionProblem
from .tensor_io import read_tensor

TENSOR_Q, TENSOR_K, TENSOR_V, TENSOR_AUX = range(4)


class CapacityError(ValueError):
    """The requested needle pairs do not fit in the sequence."""


def stream(seed: int, head: int, tensor: int) -> np.random.Generator:
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    key = seed + ((4 * head + tensor) << 64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class Workload:
    problem: AttentionProblem
    # needle workloads only
    needle_row: int | None = None
    needle_value: np.ndarray | None = None
    planted_rows: np.ndarray | None = None


def gaussian(seed: int, head: int, n: int, d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s = 1.0 / math.sqrt(d)
    q = s * stream(seed, head, TENSOR_Q).standard_normal((n, d))
    k = s * stream(seed, head, TENSOR_K).standard_normal((n, d))
    v = s * stream(seed, head, TENSOR_V).standard_normal((n, d))
    return q, k, v


def needle(seed: int, head: int, n: int, d: int, num_pairs: int,
           signal_strength: float) -> Workload:
    """Gaussian background with ``num_pairs`` salient key/value pairs planted.

    Planted keys are random unit directions scaled to norm sqrt(d); planted
    values are unscaled standard normal rows. The final query is
    ``signal_strength`` times the unit direction of one planted key, so its
    pre-softmax score against that key is exactly ``signal_strength``.
    """
    if num_pairs < 1:
        raise ValueError("needle workload needs at least one pair")
    if 2 * num_pairs > n:
        raise CapacityError(f"{num_pairs} pairs need 2 x {num_pairs} <= n rows, n={n}")
    if not signal_strength > 0:
        raise ValueError(f"signal_strength must be positive, got {signal_strength}")
    q, k, v = gaussian(seed, head, n, d)
    aux = stream(seed, head, TENSOR_AUX)
    rows = np.sort(aux.choice(n - 1, size=num_pairs, replace=False))
    dirs = aux.standard_normal((num_pairs, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    k[rows] = math.sqrt(d) * dirs
    v[rows] = aux.standard_normal((num_pairs, d))
    target = int(aux.integers(num_pairs))
    q[n - 1] = signal_strength * dirs[target]
    return Workload(
        problem=AttentionProblem(q, k, v),
        needle_row=int(rows[target]),
        needle_value=v[rows[target]].copy(),
        planted_rows=rows,
    )


def from_tensors(q_path: str, k_path: str, v_path: str, head: int) -> Workload:
    paths = [s.format(head=head) for s in (q_path, k_path, v_path)]
    q, k, v = (read_tensor(p) for p in paths)
    return Workload(problem=AttentionProblem(q, k, v))
