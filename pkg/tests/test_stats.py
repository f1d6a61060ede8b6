import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ailock.stats import mann_whitney_greater, rankdata

scipy_stats = pytest.importorskip("scipy.stats")


def test_hand_computed_exact_case():
    # every x beats every y: U = 4; only 1 of C(4,2)=6 relabellings reaches it
    r = mann_whitney_greater([0.9, 0.8], [0.5, 0.4])
    assert r.u == 4
    assert r.method == "exact"
    assert r.p_value == pytest.approx(1 / 6)


def test_reversed_samples_give_p_one():
    r = mann_whitney_greater([0.1, 0.2], [0.5, 0.6])
    assert r.u == 0
    assert r.p_value == pytest.approx(1.0)


def test_empty_sample_rejected():
    with pytest.raises(ValueError):
        mann_whitney_greater([], [1.0])


def test_constant_data_is_not_significant():
    r = mann_whitney_greater(np.ones(30), np.ones(30))
    assert r.p_value == 1.0


@given(st.lists(st.integers(0, 6), min_size=1, max_size=40))
def test_rankdata_matches_scipy(values):
    np.testing.assert_allclose(rankdata(values), scipy_stats.rankdata(values))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 9), st.integers(1, 9))
def test_exact_matches_scipy_without_ties(seed, n1, n2):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(0.3, 1, n1), rng.normal(0, 1, n2)
    ours = mann_whitney_greater(x, y)
    ref = scipy_stats.mannwhitneyu(x, y, alternative="greater", method="exact")
    assert ours.u == pytest.approx(ref.statistic)
    assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(11, 200), st.integers(11, 200))
def test_normal_approximation_matches_scipy_with_ties(seed, n1, n2):
    rng = np.random.default_rng(seed)
    x, y = rng.integers(0, 8, n1) + 0.5, rng.integers(0, 7, n2) + 0.0
    y[::3] += 0.5  # shared values between samples
    ours = mann_whitney_greater(x, y)
    ref = scipy_stats.mannwhitneyu(x, y, alternative="greater", method="asymptotic", use_continuity=True)
    assert ours.method == "normal"
    assert ours.u == pytest.approx(ref.statistic)
    assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-7, abs=1e-300)


def test_exact_with_ties_counts_half_wins():
    r = mann_whitney_greater([1.0, 2.0], [1.0, 0.0])
    assert r.u == 3.5
    assert 0 < r.p_value < 1
    assert math.isfinite(r.p_value)
