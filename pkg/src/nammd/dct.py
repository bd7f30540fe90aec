"""Distribution closeness tests.

* :func:`nammd_dct` -- NAMMD statistic against the asymptotic normal threshold
  ``eps + sigma * z_{1-alpha} / sqrt(m)`` at the boundary of the composite null.
  ``variance="delta"`` (default) uses the delta-method spread of the ratio;
  ``variance="plugin"`` uses the MMD^2 spread divided by the norm estimate,
  which ignores the norm's own variance and over-rejects when NAMMD > 0.
* :func:`mmd_dct` -- the same construction on the raw MMD^2 scale.
* :func:`canonne_dct` -- the count-based total-variation closeness statistic with
  a resampled null threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from nammd.errors import ConfigError, InputError
from nammd.estimators import (
    DEFAULT_BLOCK_ROWS,
    DiscretePair,
    estimate,
    mmd2_u_statistic,
    nammd_u_statistic,
    summarize,
    summarize_samples,
)
from nammd.kernels import check_pair

VARIANCE_MODES = ("delta", "plugin")

# below this size the dense Gram path is cheaper than blockwise accumulation
_DENSE_LIMIT = 2048


@dataclass(frozen=True)
class TestOutcome:
    """Result of one hypothesis test. ``reject`` is always ``statistic > threshold``."""

    __test__ = False  # keep pytest from collecting this as a test class

    statistic: float
    threshold: float
    p_value: float | None
    reject: bool
    alpha: float
    epsilon: float
    m: int
    method: str
    seed: int | None = None


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")


def empirical_quantile(values, alpha):
    """Smallest sample value ``t`` with ``mean(values <= t) >= 1 - alpha``."""
    _check_alpha(alpha)
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise InputError("no values to take a quantile of")
    # round guards against 0.95 * 200 = 190.00000000000003
    k = math.ceil(round((1.0 - alpha) * v.size, 9))
    return float(v[max(k, 1) - 1])


def _summary_for(X, Y, spec):
    X, Y = check_pair(X, Y)
    if X.shape[0] < 4:
        raise InputError("closeness tests need m >= 4")
    return summarize_samples(spec, X, Y, block_rows=min(DEFAULT_BLOCK_ROWS, _DENSE_LIMIT))


def _asymptotic_outcome(stat, eps, sd, m, alpha, method, seed=None):
    z = norm.ppf(1.0 - alpha)
    threshold = eps + sd * z / math.sqrt(m)
    if sd > 0:
        p_value = float(norm.sf(math.sqrt(m) * (stat - eps) / sd))
    else:
        p_value = 0.0 if stat > eps else 1.0
    return TestOutcome(
        statistic=float(stat),
        threshold=float(threshold),
        p_value=p_value,
        reject=bool(stat > threshold),
        alpha=alpha,
        epsilon=float(eps),
        m=m,
        method=method,
        seed=seed,
    )


def nammd_dct_from_report(report, epsilon, alpha=0.05, seed=None, variance="delta"):
    """NAMMD closeness test given a precomputed :class:`EstimatorReport`."""
    if not 0.0 < epsilon < 1.0:
        raise InputError(
            f"epsilon must lie in (0, 1), got {epsilon}; use the permutation test for epsilon = 0"
        )
    _check_alpha(alpha)
    if variance not in VARIANCE_MODES:
        raise InputError(f"variance must be one of {VARIANCE_MODES}, got {variance!r}")
    if variance == "delta" and report.ratio_sigma_hat is None:
        raise InputError("report has no ratio_sigma_hat; build it with estimate()")
    sd = report.ratio_sigma_hat if variance == "delta" else report.sigma_hat
    return _asymptotic_outcome(report.nammd_hat, epsilon, sd, report.m, alpha, "nammd_dct", seed)


def mmd_dct_from_report(report, epsilon_m, alpha=0.05, seed=None):
    """MMD^2 closeness test given a precomputed :class:`EstimatorReport`."""
    if not (epsilon_m >= 0 and np.isfinite(epsilon_m)):
        raise InputError(f"epsilon_m must be a nonnegative number, got {epsilon_m}")
    _check_alpha(alpha)
    return _asymptotic_outcome(
        report.mmd2_hat, epsilon_m, report.mmd_sigma_hat, report.m, alpha, "mmd_dct", seed
    )


def nammd_dct(X, Y, spec, epsilon, alpha=0.05, variance="delta"):
    """Test H0: NAMMD(P, Q) <= epsilon against H1: NAMMD(P, Q) > epsilon."""
    return nammd_dct_from_report(estimate(_summary_for(X, Y, spec)), epsilon, alpha, variance=variance)


def mmd_dct(X, Y, spec, epsilon_m, alpha=0.05):
    """Test H0: MMD^2(P, Q) <= epsilon_m using the asymptotic normal threshold."""
    return mmd_dct_from_report(estimate(_summary_for(X, Y, spec)), epsilon_m, alpha)


def reference_epsilon(X1, Y1, spec):
    """Empirical (NAMMD, MMD^2) of a reference pair, used as closeness levels."""
    X1, Y1 = check_pair(X1, Y1)
    s = summarize(summarize_samples(spec, X1, Y1))
    return nammd_u_statistic(s), mmd2_u_statistic(s)


# ---------------------------------------------------------------------------
# count-based total-variation test


def canonne_statistic(cx, cy, cx_ref, cy_ref):
    """sum_i ((X_i - Y_i)^2 - X_i - Y_i) / max(|X'_i - Y'_i|, X'_i + Y'_i, 1).

    Accepts single count vectors or stacks of them (rows are independent draws).
    """
    arrays = [np.asarray(a, dtype=float) for a in (cx, cy, cx_ref, cy_ref)]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise InputError("count vectors must share one shape")
    if any(np.any(a < 0) for a in arrays):
        raise InputError("counts must be nonnegative")
    x, y, xr, yr = arrays
    f = np.maximum(np.maximum(np.abs(xr - yr), xr + yr), 1.0)
    t = (((x - y) ** 2 - x - y) / f).sum(axis=-1)
    return float(t) if t.ndim == 0 else t


def _canonne_draws(p, q, m, size, rng):
    return canonne_statistic(
        rng.multinomial(m, p, size=size),
        rng.multinomial(m, q, size=size),
        rng.multinomial(m, p, size=size),
        rng.multinomial(m, q, size=size),
    )


def canonne_dct(null_pair, test_pair, m, alpha=0.05, B=200, rng=None, seed=None):
    """Closeness test of TV(P, Q) against the TV of a reference ("null") pair.

    ``null_pair`` is a pair at the closeness level ``eps'``; its statistic
    distribution, simulated with ``B`` draws at the test sample size ``m``, gives
    the threshold. ``test_pair`` is the pair the four test samples come from.
    """
    if B < 100:
        raise ConfigError(f"B must be at least 100 for the resampled threshold, got {B}")
    _check_alpha(alpha)
    if not isinstance(null_pair, DiscretePair) or not isinstance(test_pair, DiscretePair):
        raise InputError("canonne_dct takes DiscretePair arguments")
    if null_pair.n != test_pair.n:
        raise InputError("null and test pairs must share a support size")
    if rng is None:
        rng = np.random.default_rng(seed)
    stat = float(_canonne_draws(test_pair.p, test_pair.q, m, None, rng))
    null_stats = _canonne_draws(null_pair.p, null_pair.q, m, B, rng)
    threshold = empirical_quantile(null_stats, alpha)
    p_value = (1.0 + np.count_nonzero(null_stats >= stat)) / (B + 1.0)
    return TestOutcome(
        statistic=stat,
        threshold=threshold,
        p_value=float(p_value),
        reject=bool(stat > threshold),
        alpha=alpha,
        epsilon=float(0.5 * np.abs(null_pair.p - null_pair.q).sum()),
        m=m,
        method="canonne_dct",
        seed=seed,
    )
