import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from r2p.metrics import coverage_rate, evaluate, group_by_leaf, mean_ci_width, overlap, pehe, v_across, v_in


def test_v_across_table():
    assert v_across([[0.0], [0.0]]) == 0
    assert v_across([[1.0], [3.0]]) == 1.0
    assert v_across([[1.0, 2.0, 3.0]]) == 0


def test_v_in_table():
    assert v_in([[2.0, 2.0], [5.0]]) == 0
    assert v_in([[0.0, 2.0], [5.0, 5.0]]) == 0.5


def test_coverage_table():
    tau = np.array([1.0, 2.0, 3.0])
    assert coverage_rate(np.full(3, -math.inf), np.full(3, math.inf), tau) == 1.0
    assert coverage_rate(tau + 1, tau + 1, tau) == 0.0
    assert coverage_rate([0.0, 0.0, 5.0], [1.5, 2.5, 6.0], tau) == pytest.approx(2 / 3)


def test_width_table():
    assert mean_ci_width([0.0, 0.0], [1.0, 3.0]) == 2.0
    assert mean_ci_width([0.0, -math.inf], [1.0, 3.0]) == math.inf
    with pytest.raises(ValueError):
        mean_ci_width([], [])


def test_overlap_table():
    assert overlap([[0.0, 1.0], [2.0, 3.0]], p=0, q=100) == 0
    g = [0.0, 1.0, 2.0, 3.0, 4.0]
    assert overlap([g, g]) == pytest.approx(np.percentile(g, 80) - np.percentile(g, 20))
    assert overlap([[0.0, 2.0], [1.0, 3.0]], p=0, q=100) == 1


def test_pehe_table():
    tau = np.array([1.0, -2.0, 0.5])
    assert pehe(tau, np.zeros(3), tau) == 0
    assert pehe(tau + 0.7, np.zeros(3), tau) == pytest.approx(0.7)
    assert pehe(np.array([0.0, 2.0]), np.zeros(2), np.zeros(2)) == pytest.approx(math.sqrt(2))


def test_single_group_identities():
    tau = np.random.default_rng(0).normal(size=100)
    m = evaluate(np.zeros(100, int), tau, tau - 1, tau + 1, tau, 1)
    assert m.v_in == pytest.approx(m.v_pop, rel=1e-12)
    assert m.v_across == 0 and m.v_in_normalized == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(sizes=st.lists(st.integers(1, 20), min_size=1, max_size=6), seed=st.integers(0, 1000))
def test_total_variance_equal_sizes_or_weighted(sizes, seed):
    r = np.random.default_rng(seed)
    groups = [r.normal(i, 1, size=s) for i, s in enumerate(sizes)]
    tau = np.concatenate(groups)
    w = np.array(sizes) / tau.size
    within = sum(wi * g.var() for wi, g in zip(w, groups))
    means = np.array([g.mean() for g in groups])
    across = np.sum(w * (means - tau.mean()) ** 2)
    assert within + across == pytest.approx(tau.var(), rel=1e-9, abs=1e-12)
    if len(set(sizes)) == 1:
        assert v_in(groups) + v_across(groups) == pytest.approx(tau.var(), rel=1e-9, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(a=st.lists(st.floats(-10, 10), min_size=1, max_size=15), b=st.lists(st.floats(-10, 10), min_size=1, max_size=15))
def test_overlap_symmetric_nonnegative(a, b):
    assert overlap([a, b]) == pytest.approx(overlap([b, a]))
    assert overlap([a, b]) >= 0


def test_empty_group_excluded():
    assert v_in([[1.0, 3.0], []]) == 1.0


def test_group_by_leaf():
    groups = group_by_leaf(np.array([1.0, 2.0, 3.0]), np.array([2, 0, 2]))
    assert [list(g) for g in groups] == [[2.0], [1.0, 3.0]]
