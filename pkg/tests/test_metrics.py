import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vadbnet.agreement import UndefinedStatistic
from vadbnet.metrics import PairedSample, binary_accuracy, kendall_counts, krcc, mse, plcc, rankdata, rmse, srcc
from vadbnet.stats import UnstableEstimate, bootstrap_ci, error_bars, permutation_pvalue

import oracles


def fixture(rng, n, ties):
    if ties:
        return rng.integers(1, 6, n).astype(float), rng.integers(1, 6, n).astype(float)
    x = rng.normal(size=n)
    return x, 0.5 * x + rng.normal(size=n)


def defined(x, y):
    return len(set(x)) > 1 and len(set(y)) > 1


class TestExamples:
    def test_identical(self):
        x = np.array([1.0, 4.0, 2.0, 8.0])
        assert srcc(x, x) == 1.0 and plcc(x, x) == 1.0 and krcc(x, x) == 1.0 and rmse(x, x) == 0.0

    def test_reversed(self):
        x = np.arange(6.0)
        assert srcc(x, x[::-1]) == -1.0 and krcc(x, x[::-1]) == -1.0

    def test_hand_ranks(self):
        assert srcc([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)
        assert oracles.spearman_oracle([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)

    def test_shift(self):
        y = np.array([2.0, 5.0, 3.0, 9.0, 7.0])
        assert plcc(y + 1, y) == pytest.approx(1.0) and rmse(y + 1, y) == 1.0 and krcc(y + 1, y) == 1.0

    @pytest.mark.parametrize("fn", [srcc, plcc, krcc])
    def test_constant_undefined(self, fn):
        with pytest.raises(UndefinedStatistic):
            fn([3.0, 3.0, 3.0], [1.0, 2.0, 3.0])

    @pytest.mark.parametrize("fn", [srcc, plcc, krcc])
    def test_too_short(self, fn):
        with pytest.raises(UndefinedStatistic):
            fn([1.0], [1.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            plcc([1.0, 2.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            PairedSample([1.0, 2.0], [1.0])

    def test_average_ranks(self):
        assert rankdata([10, 20, 20, 5]).tolist() == [2.0, 3.5, 3.5, 1.0]

    def test_binary_accuracy(self):
        assert binary_accuracy([3.0, 7.0], [3.0, 7.0]) == 1.0
        assert binary_accuracy([10.0] * 4, [1.0] * 4) == 0.0
        pred = [4.9, 5.0, 6.0, 2.0, 8.0, 5.1, 1.0, 9.0]
        truth = [5.0, 4.9, 7.0, 3.0, 4.0, 6.0, 5.0, 9.5]
        # agree at positions 2, 3, 5, 7 (pairs 0, 1, 4, 6 straddle the threshold)
        assert binary_accuracy(pred, truth) == 4 / 8

    def test_mse_rmse(self):
        assert mse([1, 2, 3], [1, 2, 5]) == pytest.approx(4 / 3)
        assert rmse([1, 2, 3], [1, 2, 5]) == pytest.approx(math.sqrt(4 / 3))


def test_oracle_sweep():
    rng = np.random.default_rng(2024)
    checked = 0
    for i in range(1000):
        n = int(rng.integers(2, 101))
        x, y = fixture(rng, n, ties=i % 2 == 0)
        assert rmse(x, y) == pytest.approx(oracles.rmse_oracle(x, y), abs=1e-12)
        if not defined(x, y):
            continue
        assert abs(srcc(x, y) - oracles.spearman_oracle(x, y)) < 1e-12
        assert abs(plcc(x, y) - oracles.pearson_oracle(x, y)) < 1e-12
        assert abs(krcc(x, y) - oracles.kendall_oracle(x, y)) < 1e-12
        assert kendall_counts(x, y)[:4] == oracles.kendall_counts(x, y)[:4]
        checked += 1
    assert checked > 900


def test_kendall_exact_n50():
    rng = np.random.default_rng(5)
    x, y = rng.integers(1, 11, 50).astype(float), rng.integers(1, 11, 50).astype(float)
    assert krcc(x, y) == oracles.kendall_oracle(x, y)


def test_kendall_chunking():
    rng = np.random.default_rng(6)
    x, y = rng.normal(size=300), rng.integers(0, 5, 300).astype(float)
    assert kendall_counts(x, y, chunk=7) == kendall_counts(x, y, chunk=4096)


vectors = st.integers(3, 40).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-3, 3, allow_nan=False), min_size=n, max_size=n),
        st.lists(st.floats(-3, 3, allow_nan=False), min_size=n, max_size=n),
    )
)


@given(vectors)
@settings(max_examples=150, deadline=None)
def test_rank_metrics_monotone_invariant(xy):
    x, y = (np.array(v) for v in xy)
    if not defined(x, y):
        return
    for f in (lambda v: v**3, np.exp):
        # strictly monotone maps preserve ranks unless they collapse distinct floats
        if len(set(f(x))) != len(set(x)) or len(set(f(y))) != len(set(y)):
            continue
        assert srcc(f(x), y) == pytest.approx(srcc(x, y), abs=1e-12)
        assert srcc(x, f(y)) == pytest.approx(srcc(x, y), abs=1e-12)
        assert krcc(f(x), f(y)) == pytest.approx(krcc(x, y), abs=1e-12)


@given(vectors, st.floats(0.1, 10), st.floats(-5, 5))
@settings(max_examples=150, deadline=None)
def test_plcc_affine_invariant(xy, a, b):
    x, y = (np.array(v) for v in xy)
    if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
        return
    assert plcc(a * x + b, y) == pytest.approx(plcc(x, y), abs=1e-9)
    assert plcc(x, a * y + b) == pytest.approx(plcc(x, y), abs=1e-9)


@given(vectors)
@settings(max_examples=100, deadline=None)
def test_rmse_zero_iff_equal(xy):
    x, y = (np.array(v) for v in xy)
    assert (rmse(x, y) == 0.0) == np.array_equal(x, y)
    assert rmse(x, x) == 0.0


# ------------------------------------------------------------------ bootstrap


class TestBootstrap:
    def test_reported_error_bars(self):
        lo_err, hi_err = error_bars(0.9299, 0.9232, 0.9353)
        assert (round(lo_err, 4), round(hi_err, 4)) == (0.0067, 0.0054)

    def test_constant_pairs_zero_width(self):
        ci = bootstrap_ci("RMSE", np.full(10, 3.0), np.full(10, 5.0), B=200, seed=1)
        assert ci.lo == ci.hi == ci.estimate == 2.0
        assert (ci.err_lo, ci.err_hi) == (0.0, 0.0)

    def test_seeded(self):
        rng = np.random.default_rng(0)
        x, y = fixture(rng, 40, ties=False)
        assert bootstrap_ci("SRCC", x, y, B=300, seed=9) == bootstrap_ci("SRCC", x, y, B=300, seed=9)

    def test_error_bars_are_differences(self):
        rng = np.random.default_rng(1)
        x, y = fixture(rng, 30, ties=False)
        ci = bootstrap_ci("PLCC", x, y, B=300, seed=2)
        assert ci.err_lo == ci.estimate - ci.lo and ci.err_hi == ci.hi - ci.estimate

    def test_degenerate_counted(self):
        x = np.array([0.0, 0.0, 0.0, 1.0, 2.0, 3.0])
        ci = bootstrap_ci("SRCC", x, np.arange(6.0), B=500, seed=0)
        assert 0 < ci.degenerate < 250

    def test_unstable(self):
        x = np.zeros(10)
        x[0] = 1.0
        y = np.zeros(10)
        y[-1] = 1.0
        with pytest.raises(UnstableEstimate):
            bootstrap_ci("SRCC", x, y, B=500, seed=0)

    @given(st.integers(0, 10**6))
    @settings(max_examples=40, deadline=None)
    def test_rows_flagged_not_clamped(self, seed):
        rng = np.random.default_rng(seed)
        x, y = fixture(rng, int(rng.integers(5, 25)), ties=True)
        try:
            ci = bootstrap_ci("KRCC", x, y, B=200, seed=seed)
        except (UndefinedStatistic, UnstableEstimate):
            return
        assert ci.estimate == krcc(x, y)
        assert ci.flagged == (not ci.lo <= ci.estimate <= ci.hi)


# ---------------------------------------------------------------- permutation


class TestPermutation:
    def test_perfect_correlation(self):
        x = np.arange(20.0)
        assert permutation_pvalue("SRCC", x, x, P=10000, seed=0) <= 0.001
        assert permutation_pvalue("KRCC", x, x, P=2000, seed=0) <= 1 / 2001 * 1.5

    def test_two_points(self):
        # both orderings of two points give |rho| = 1, so every permutation counts
        assert permutation_pvalue("SRCC", [1.0, 2.0], [3.0, 4.0], P=50, seed=0) == 1.0
        assert permutation_pvalue("PLCC", [1.0, 2.0], [4.0, 3.0], P=50, seed=0) == 1.0

    def test_bounds_and_smoothing(self):
        rng = np.random.default_rng(3)
        x, y = fixture(rng, 15, ties=False)
        p = permutation_pvalue("PLCC", x, y, P=99, seed=1)
        assert 0 < p <= 1 and round(p * 100) == p * 100

    def test_null_calibration(self):
        rng = np.random.default_rng(11)
        ps = []
        for trial in range(60):
            x, y = rng.normal(size=80), rng.normal(size=80)
            ps.append(permutation_pvalue("SRCC", x, y, P=400, seed=trial))
        assert 0.25 <= np.median(ps) <= 0.75

    def test_vectorised_matches_loop(self):
        rng = np.random.default_rng(4)
        x, y = fixture(rng, 25, ties=True)
        for name, fn in (("SRCC", srcc), ("PLCC", plcc)):
            fast = permutation_pvalue(name, x, y, P=500, seed=5)
            slow = permutation_pvalue(fn, x, y, P=500, seed=5)
            assert fast == slow

    def test_seeded(self):
        x, y = np.arange(10.0), np.array([3, 1, 2, 5, 4, 7, 6, 9, 8, 10.0])
        assert permutation_pvalue("KRCC", x, y, P=300, seed=2) == permutation_pvalue("KRCC", x, y, P=300, seed=2)
