import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from nammd.dct import (
    canonne_dct,
    canonne_statistic,
    empirical_quantile,
    mmd_dct,
    nammd_dct,
    nammd_dct_from_report,
    reference_epsilon,
)
from nammd.errors import ConfigError, InputError
from nammd.estimators import EstimatorReport, estimate
from nammd.kernels import KernelSpec, gram_blocks
from nammd.synthesis import uniform_with_tv
from oracles import loop_canonne

GAUSS = KernelSpec.gaussian(1.0)


def test_identical_samples_never_reject(rng):
    X = rng.normal(size=(40, 2))
    out = nammd_dct(X, X.copy(), GAUSS, epsilon=0.5)
    assert out.statistic == pytest.approx(0.0, abs=1e-14) and not out.reject
    assert mmd_dct(X, X.copy(), GAUSS, epsilon_m=0.1).reject is False


def test_threshold_and_p_value_formula(rng):
    X = rng.normal(size=(30, 2))
    Y = rng.normal(size=(30, 2)) + 1.0
    rep = estimate(gram_blocks(GAUSS, X, Y))
    for variance, sd in (("plugin", rep.sigma_hat), ("delta", rep.ratio_sigma_hat)):
        out = nammd_dct(X, Y, GAUSS, epsilon=0.1, alpha=0.05, variance=variance)
        assert out.statistic == pytest.approx(rep.nammd_hat, abs=1e-14)
        assert out.threshold == pytest.approx(0.1 + sd * norm.ppf(0.95) / math.sqrt(30), abs=1e-14)
        assert out.p_value == pytest.approx(norm.sf(math.sqrt(30) * (rep.nammd_hat - 0.1) / sd))
        assert out.reject == (out.statistic > out.threshold) == (out.p_value <= 0.05)
    with pytest.raises(InputError):
        nammd_dct(X, Y, GAUSS, epsilon=0.1, variance="bootstrap")


def test_mmd_threshold_uses_unscaled_sigma(rng):
    X = rng.normal(size=(30, 2))
    Y = rng.normal(size=(30, 2)) + 0.5
    rep = estimate(gram_blocks(GAUSS, X, Y))
    out = mmd_dct(X, Y, GAUSS, epsilon_m=0.05)
    assert out.statistic == pytest.approx(rep.mmd2_hat, abs=1e-14)
    assert out.threshold == pytest.approx(0.05 + rep.mmd_sigma_hat * norm.ppf(0.95) / math.sqrt(30))


REPORT = EstimatorReport(0.1, 2.5, 0.04, 0.01, 0.02, 0.3, 100, ratio_sigma_hat=0.35)


@given(e1=st.floats(0.01, 0.98), de=st.floats(1e-3, 0.01))
def test_threshold_increasing_in_epsilon(e1, de):
    assert nammd_dct_from_report(REPORT, e1 + de).threshold > nammd_dct_from_report(REPORT, e1).threshold


@given(a1=st.floats(0.01, 0.5), da=st.floats(1e-3, 0.4))
def test_threshold_decreasing_in_alpha(a1, da):
    lo = nammd_dct_from_report(REPORT, 0.3, alpha=a1).threshold
    hi = nammd_dct_from_report(REPORT, 0.3, alpha=a1 + da).threshold
    assert hi < lo


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.2])
def test_epsilon_outside_open_interval(rng, eps):
    X = rng.normal(size=(10, 1))
    with pytest.raises(InputError):
        nammd_dct(X, X + 1, GAUSS, epsilon=eps)


def test_small_or_mismatched_samples(rng):
    with pytest.raises(InputError):
        nammd_dct(rng.normal(size=(3, 1)), rng.normal(size=(3, 1)), GAUSS, 0.3)
    with pytest.raises(InputError):
        nammd_dct(rng.normal(size=(8, 1)), rng.normal(size=(9, 1)), GAUSS, 0.3)


def test_reference_epsilon_identical(rng):
    X = rng.normal(size=(12, 2))
    assert reference_epsilon(X, X.copy(), GAUSS) == (0.0, 0.0)


def test_empirical_quantile_convention():
    v = np.arange(1, 201, dtype=float)
    # smallest t with at least 95% of values <= t
    assert empirical_quantile(v, 0.05) == 190.0
    assert empirical_quantile([5.0], 0.05) == 5.0
    with pytest.raises(InputError):
        empirical_quantile([], 0.05)


def test_canonne_hand_cases():
    assert canonne_statistic([1, 1], [1, 1], [1, 1], [1, 1]) == -2.0
    assert canonne_statistic([3, 0], [0, 3], [3, 0], [0, 3]) == 4.0
    assert canonne_statistic([0, 0], [0, 0], [0, 0], [0, 0]) == 0.0


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 12))
def test_canonne_matches_loop(seed, n):
    rng = np.random.default_rng(seed)
    c = rng.integers(0, 9, size=(4, n))
    assert canonne_statistic(*c) == pytest.approx(loop_canonne(*c), rel=1e-12, abs=1e-12)


def test_canonne_stacked_rows(rng):
    c = rng.integers(0, 5, size=(4, 6, 3))
    stacked = canonne_statistic(*c)
    for r in range(6):
        assert stacked[r] == pytest.approx(canonne_statistic(*(a[r] for a in c)))


def test_canonne_invalid_counts():
    with pytest.raises(InputError):
        canonne_statistic([1, 2], [1], [1, 2], [1, 2])
    with pytest.raises(InputError):
        canonne_statistic([1, -2], [1, 0], [1, 2], [1, 2])


def _tv_pair(eps, n=20, seed=0):
    rng = np.random.default_rng(seed)
    return uniform_with_tv(n, eps, rng)


def test_canonne_dct_deterministic_and_epsilon():
    null = _tv_pair(0.3)
    a = canonne_dct(null, null, m=100, seed=5)
    b = canonne_dct(null, null, m=100, seed=5)
    assert a == b
    assert a.epsilon == pytest.approx(0.3, abs=1e-12)
    assert a.reject == (a.statistic > a.threshold)
    assert 0.0 < a.p_value <= 1.0


def test_canonne_dct_config_errors():
    null = _tv_pair(0.3)
    with pytest.raises(ConfigError):
        canonne_dct(null, null, m=100, B=50)
    with pytest.raises(InputError):
        canonne_dct(null, _tv_pair(0.3, n=10), m=100)


def test_canonne_dct_power_above_level():
    null = _tv_pair(0.2, seed=1)
    alt = _tv_pair(0.5, seed=1)
    rng = np.random.default_rng(3)
    rej_null = np.mean([canonne_dct(null, null, m=300, rng=rng).reject for _ in range(100)])
    rej_alt = np.mean([canonne_dct(null, alt, m=300, rng=rng).reject for _ in range(100)])
    assert rej_null <= 0.15
    assert rej_alt >= rej_null + 0.3
