import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_problem
from deltalab.attention import (
    AttentionProblem,
    Explicit,
    OracleTopK,
    SinkWindow,
    decode_step,
    dense_attention,
    pattern_mask,
    sparse_attention,
)
from deltalab.linalg import DimensionError


def loop_attention(p: AttentionProblem, key_sets) -> np.ndarray:
    """Per-row scalar exp-sum oracle over explicit key index sets."""
    out = np.zeros((p.n, p.d))
    for i in range(p.n):
        keys = sorted(key_sets[i])
        s = [p.scale * sum(p.q[i, t] * p.k[j, t] for t in range(p.d)) for j in keys]
        m = max(s)
        w = [math.exp(x - m) for x in s]
        z = sum(w)
        for t in range(p.d):
            out[i, t] = sum(wj * p.v[j, t] for wj, j in zip(w, keys)) / z
    return out


def test_problem_validation():
    with pytest.raises(DimensionError):
        AttentionProblem(np.ones((3, 2)), np.ones((3, 2)), np.ones((2, 2)))
    with pytest.raises(ValueError):
        AttentionProblem(np.ones((3, 2)), np.ones((3, 2)), np.ones((3, 2)), scale=-1.0)
    p = AttentionProblem(np.ones((3, 4)), np.ones((3, 4)), np.ones((3, 4)))
    assert p.scale == 0.5
    with pytest.raises(ValueError):
        p.q[0, 0] = 2.0


def test_single_row_returns_value():
    p = AttentionProblem([[0.3, -1.0]], [[2.0, 0.5]], [[7.0, -3.0]])
    np.testing.assert_array_equal(dense_attention(p).output, [[7.0, -3.0]])


def test_zero_scores_give_running_mean():
    rng = np.random.default_rng(1)
    v = rng.standard_normal((6, 3))
    p = AttentionProblem(np.zeros((6, 3)), rng.standard_normal((6, 3)), v)
    expected = np.cumsum(v, axis=0) / np.arange(1, 7)[:, None]
    np.testing.assert_allclose(dense_attention(p).output, expected, atol=1e-15)


def test_dense_matches_scalar_loop_oracle():
    p = make_problem(5, 8, 4, scale_inputs=False)
    res = dense_attention(p)
    ref = loop_attention(p, [range(i + 1) for i in range(p.n)])
    assert np.max(np.abs(res.output - ref)) <= 1e-12
    np.testing.assert_array_equal(res.computed_entries, np.arange(1, 9))
    assert np.all(res.row_normalizers > 0)


def test_full_explicit_mask_is_dense():
    p = make_problem(2, 12, 3, scale_inputs=False)
    d = dense_attention(p)
    s = sparse_attention(p, Explicit.full(12))
    assert np.max(np.abs(s.output - d.output)) <= 1e-12


def test_window_covering_everything_is_dense():
    p = make_problem(3, 10, 4, scale_inputs=False)
    s = sparse_attention(p, SinkWindow(0, 10))
    assert np.max(np.abs(s.output - dense_attention(p).output)) <= 1e-12


def sort_topk_oracle(p: AttentionProblem, k: int):
    sets = []
    for i in range(p.n):
        s = [(p.scale * float(p.q[i] @ p.k[j]), j) for j in range(i + 1)]
        s.sort(key=lambda t: (-t[0], -t[1]))
        sets.append([j for _, j in s[:k]])
    return sets


def test_oracle_topk_matches_sort_and_renormalize():
    p = make_problem(4, 4, 2, scale_inputs=False)
    res = sparse_attention(p, OracleTopK(2))
    sets = sort_topk_oracle(p, 2)
    assert np.max(np.abs(res.output - loop_attention(p, sets))) <= 1e-12
    np.testing.assert_array_equal(res.computed_entries, [1, 2, 2, 2])


def test_topk_ties_prefer_recent_keys():
    # all scores tie: top-2 of row i must be keys {i-1, i}
    p = AttentionProblem(np.zeros((5, 2)), np.ones((5, 2)), np.eye(5, 2))
    mask = pattern_mask(p, OracleTopK(2))
    for i in range(1, 5):
        assert set(np.flatnonzero(mask[i])) == {i - 1, i}


@pytest.mark.parametrize("sink, window", [(0, 1), (1, 2), (2, 3), (4, 4), (3, 20)])
def test_sink_window_key_sets(sink, window):
    n = 12
    p = make_problem(0, n, 2)
    mask = pattern_mask(p, SinkWindow(sink, window))
    for i in range(n):
        expected = {j for j in range(n) if j <= i and (j < sink or j > i - window)}
        assert set(np.flatnonzero(mask[i])) == expected
        assert mask[i, i]
    res = sparse_attention(p, SinkWindow(sink, window))
    ref = loop_attention(p, [np.flatnonzero(mask[i]) for i in range(n)])
    assert np.max(np.abs(res.output - ref)) <= 1e-12


def test_explicit_mask_validation():
    with pytest.raises(ValueError):
        Explicit(np.ones((3, 3), dtype=bool))
    bad = np.tril(np.ones((3, 3), dtype=bool))
    bad[2] = False
    with pytest.raises(ValueError):
        Explicit(bad)
    with pytest.raises(ValueError):
        SinkWindow(-1, 2)
    with pytest.raises(ValueError):
        OracleTopK(0)


patterns = st.one_of(
    st.builds(SinkWindow, st.integers(0, 4), st.integers(1, 8)),
    st.builds(OracleTopK, st.integers(1, 8)),
)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 20), st.integers(1, 6), patterns)
def test_causality(seed, n, d, pat):
    p = make_problem(seed, n, d, scale_inputs=False)
    base = sparse_attention(p, pat).output
    i = n // 2
    k, v = p.k.copy(), p.v.copy()
    k[i + 1:] += 3.0
    v[i + 1:] -= 5.0
    out = sparse_attention(AttentionProblem(p.q, k, v), pat).output
    np.testing.assert_array_equal(out[: i + 1], base[: i + 1])
    dense_out = dense_attention(AttentionProblem(p.q, k, v)).output
    np.testing.assert_array_equal(dense_out[: i + 1], dense_attention(p).output[: i + 1])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 20), st.integers(1, 6), patterns)
def test_renormalization_and_convexity(seed, n, d, pat):
    p = make_problem(seed, n, d, scale_inputs=False)
    res = sparse_attention(p, pat)
    mask = res.weights > 0
    assert np.all(np.abs(res.weights.sum(axis=1) - 1.0) <= 1e-12)
    assert np.all(res.computed_entries <= np.arange(1, n + 1))
    for i in range(n):
        sel = p.v[np.flatnonzero(mask[i])]
        assert np.all(res.output[i] >= sel.min(axis=0) - 1e-12)
        assert np.all(res.output[i] <= sel.max(axis=0) + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 24), st.integers(1, 6), st.integers(1, 10))
def test_topk_captures_proportional_mass(seed, n, d, k):
    p = make_problem(seed, n, d, scale_inputs=False)
    dense = dense_attention(p)
    res = sparse_attention(p, OracleTopK(k))
    for i in range(n):
        # both normalizers re-expressed against the dense row max
        t = res.row_normalizers[i] * math.exp(res.row_max[i] - dense.row_max[i])
        z = dense.row_normalizers[i]
        assert t >= min(k, i + 1) / (i + 1) * z * (1 - 1e-12)


def test_decode_empty_cache_returns_new_value():
    v_new = np.array([1.0, -2.0, 0.5])
    out = decode_step(np.zeros((0, 3)), np.zeros((0, 3)), [1.0, 2.0, 3.0], [0.5, 0.5, 0.5], v_new, 0.5)
    np.testing.assert_array_equal(out, v_new)


def test_decode_uniform_two_keys():
    out = decode_step([[1.0, 0.0]], [[2.0, 4.0]], [0.0, 1.0], [3.0, 0.0], [0.0, 2.0], 1.0)
    np.testing.assert_allclose(out, [1.0, 3.0], atol=1e-15)


def test_decode_matches_dense_last_row():
    p = make_problem(21, 8, 5, scale_inputs=False)
    out = decode_step(p.k[:7], p.v[:7], p.q[7], p.k[7], p.v[7], p.scale)
    assert np.max(np.abs(out - dense_attention(p).output[7])) <= 1e-12


def test_decode_dimension_mismatch():
    with pytest.raises(DimensionError):
        decode_step(np.ones((2, 3)), np.ones((2, 3)), [1.0, 2.0], [1.0, 2.0], [1.0, 2.0], 1.0)
