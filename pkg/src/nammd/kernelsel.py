"""Kernel selection by gradient ascent on the power t-statistic.

The objective is ``MMD^2-hat / sqrt(v + 1e-8)`` with ``v`` the estimated
variance ``((4m-8) zeta1 + 2 zeta2) / (m-1)``. Dividing NAMMD-hat by its own
standard deviation estimate gives the same number, since the norm term cancels,
so one objective serves both tests.

Parameters are optimized on a log scale: ``log gamma`` for Gaussian and Laplace
kernels, ``log diag(M)`` (with gamma fixed at 1) for the diagonal Mahalanobis
kernel. The analytic gradient pushes a kernel-matrix tangent through the Gram
reductions of :mod:`nammd.estimators`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from nammd.errors import InputError
from nammd.estimators import (
    GramSummary,
    _quadratic_terms,
    _quadratic_terms_jvp,
    _zeta_coefficients,
    mmd2_u_statistic,
    mmd_variance,
    norm_u_statistic,
)
from nammd.kernels import GramBlock, KernelSpec, check_pair, gram_blocks, median_heuristic
from nammd.optim import Adam, OptimizerConfig, central_difference

VARIANCE_REGULARIZER = 1e-8
# variances below this (relative to K^2) are cancellation noise around zero
DEGENERATE_VARIANCE = 1e-12
SELECTABLE = ("gaussian", "laplace", "mahalanobis")


@dataclass(frozen=True)
class TStatistic:
    value: float
    degenerate: bool


def _degenerate(v, K):
    return v <= DEGENERATE_VARIANCE * K * K


def _t_from_summary(s, reg=VARIANCE_REGULARIZER):
    c1, c2 = _zeta_coefficients(s.m)
    q = _quadratic_terms(s)
    v = mmd_variance(c1 @ q, c2 @ q, s.m)
    if _degenerate(v, s.K):
        return TStatistic(0.0, True)
    return TStatistic(mmd2_u_statistic(s) / np.sqrt(v + reg), False)


def t_statistic(X, Y, spec, form="mmd"):
    """Power t-statistic with its degeneracy flag.

    ``form="nammd"`` evaluates NAMMD-hat / sigma-hat (with the regularized,
    unclamped sigma-hat); ``form="mmd"`` evaluates MMD^2-hat / sigma_M-hat.
    """
    X, Y = check_pair(X, Y)
    if X.shape[0] < 4:
        raise InputError("the t-statistic needs m >= 4")
    s = GramSummary.from_blocks(gram_blocks(spec, X, Y))
    if form == "mmd":
        return _t_from_summary(s)
    if form != "nammd":
        raise InputError(f"form must be 'mmd' or 'nammd', got {form!r}")
    c1, c2 = _zeta_coefficients(s.m)
    q = _quadratic_terms(s)
    v = mmd_variance(c1 @ q, c2 @ q, s.m)
    if _degenerate(v, s.K):
        return TStatistic(0.0, True)
    norm = norm_u_statistic(s)
    sigma = np.sqrt(v + VARIANCE_REGULARIZER) / norm
    return TStatistic((mmd2_u_statistic(s) / norm) / sigma, False)


def power_t_statistic(X, Y, spec, form="mmd"):
    """Value of :func:`t_statistic`; degenerate variance gives 0."""
    return t_statistic(X, Y, spec, form).value


# ---------------------------------------------------------------------------
# parameterization and analytic gradient


class _Objective:
    """t-statistic as a function of log-parameters, with cached pairwise geometry."""

    def __init__(self, X, Y, family, bandwidth=1.0):
        if family not in SELECTABLE:
            raise InputError(f"family must be one of {SELECTABLE}, got {family!r}")
        self.X, self.Y = check_pair(X, Y)
        self.m = self.X.shape[0]
        if self.m < 4:
            raise InputError("kernel selection needs m >= 4")
        self.family = family
        self.bandwidth = bandwidth
        pairs = ((self.X, self.X), (self.Y, self.Y), (self.X, self.Y))
        if family == "gaussian":
            self.geom = [cdist(a, b, "sqeuclidean") for a, b in pairs]
        elif family == "laplace":
            self.geom = [cdist(a, b, "cityblock") for a, b in pairs]
        else:
            # per-coordinate squared differences, shape (m, m, d)
            self.geom = [(a[:, None, :] - b[None, :, :]) ** 2 for a, b in pairs]

    def spec(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.family == "mahalanobis":
            return KernelSpec.mahalanobis(np.diag(np.exp(theta)), self.bandwidth)
        return KernelSpec(self.family, float(np.exp(theta[0])))

    def _grams(self, theta):
        """Kernel blocks and their derivatives with respect to each parameter."""
        theta = np.asarray(theta, dtype=float)
        ks, dks = [], []
        for g in self.geom:
            if self.family == "gaussian":
                gam2 = np.exp(2 * theta[0])
                k = np.exp(-g / (2 * gam2))
                dks.append([k * g / gam2])
            elif self.family == "laplace":
                gam = np.exp(theta[0])
                k = np.exp(-g / gam)
                dks.append([k * g / gam])
            else:
                w = np.exp(theta) / (2 * self.bandwidth**2)
                k = np.exp(-(g @ w))
                dks.append([-k * w[j] * g[..., j] for j in range(theta.size)])
            ks.append(k)
        return ks, dks

    def value(self, theta):
        ks, _ = self._grams(theta)
        return _t_from_summary(GramSummary.from_blocks(GramBlock(*ks))).value

    def value_and_grad(self, theta):
        ks, dks = self._grams(theta)
        s = GramSummary.from_blocks(GramBlock(*ks))
        m = s.m
        c1, c2 = _zeta_coefficients(m)
        q = _quadratic_terms(s)
        v = mmd_variance(c1 @ q, c2 @ q, m)
        if _degenerate(v, s.K):
            return 0.0, np.zeros(len(dks[0]))
        sd = np.sqrt(v + VARIANCE_REGULARIZER)
        mmd2 = mmd2_u_statistic(s)
        grad = np.empty(len(dks[0]))
        for j in range(grad.size):
            ds = _tangent_summary(ks, [d[j] for d in dks])
            dq = _quadratic_terms_jvp(s, ds)
            dv = mmd_variance(c1 @ dq, c2 @ dq, m)
            dmmd2 = (ds.sxx + ds.syy - 2.0 * (ds.sxy - ds.trace_xy)) / (m * (m - 1))
            grad[j] = dmmd2 / sd - mmd2 * dv / (2 * sd**3)
        return mmd2 / sd, grad


def _tangent_summary(ks, dks):
    """Derivative of every :class:`GramSummary` field along the tangent ``dks``."""
    (kxx, kyy, kxy), (dxx, dyy, dxy) = ks, dks
    dxx = dxx.copy()
    dyy = dyy.copy()
    np.fill_diagonal(dxx, 0.0)
    np.fill_diagonal(dyy, 0.0)
    # off-diagonal products only; the tangent diagonal is already zero
    return GramSummary(
        m=kxx.shape[0],
        K=0.0,
        rxx=dxx.sum(axis=1),
        ryy=dyy.sum(axis=1),
        rxy=dxy.sum(axis=1),
        cxy=dxy.sum(axis=0),
        fxx=2.0 * float(np.sum(kxx * dxx)),
        fyy=2.0 * float(np.sum(kyy * dyy)),
        fxy=2.0 * float(np.sum(kxy * dxy)),
        trace_xy=float(np.trace(dxy)),
    )


def t_statistic_gradient(X, Y, spec, mode="analytic", h=1e-5):
    """Gradient of the t-statistic with respect to the log-parameters of ``spec``.

    Gaussian/Laplace: d t / d log gamma (length 1). Mahalanobis (diagonal metric):
    d t / d log M_kk.
    """
    obj = _Objective(X, Y, spec.family, spec.bandwidth if spec.family == "mahalanobis" else 1.0)
    theta = _theta_of(spec)
    if mode == "analytic":
        return obj.value_and_grad(theta)[1]
    if mode == "central-difference":
        return central_difference(obj.value, theta, h)
    raise InputError(f"unknown gradient mode {mode!r}")


def _theta_of(spec):
    if spec.family == "mahalanobis":
        M = spec.metric
        if not np.allclose(M, np.diag(np.diag(M)), rtol=0, atol=0):
            raise InputError("only diagonal Mahalanobis metrics are optimized")
        return np.log(np.diag(M))
    return np.array([np.log(spec.bandwidth)])


# ---------------------------------------------------------------------------
# selection


@dataclass(frozen=True)
class SelectionResult:
    spec: KernelSpec
    initial_spec: KernelSpec
    t_initial: float
    t_final: float
    iterations: int
    warning: str | None = None


def initial_spec(X, Y, family):
    """Median-heuristic initialization for the given family."""
    med = median_heuristic(X, Y, max_points=1000)
    if family == "mahalanobis":
        d = np.asarray(X).reshape(np.shape(X)[0], -1).shape[1]
        return KernelSpec.mahalanobis(np.eye(d) / med**2, 1.0)
    return KernelSpec(family, med)


def select_kernel(X, Y, family="gaussian", config=None, init=None):
    """Adam ascent on the t-statistic over log-parameters.

    Returns the best iterate seen (the initialization included), so the selected
    kernel never scores below the starting one. A non-finite objective stops the
    run and sets ``warning``.
    """
    config = config or OptimizerConfig()
    init = init or initial_spec(X, Y, family)
    if init.family != family:
        raise InputError(f"init family {init.family!r} does not match {family!r}")
    obj = _Objective(X, Y, family, init.bandwidth if family == "mahalanobis" else 1.0)
    theta0 = _theta_of(init)
    theta = theta0.copy()
    adam = Adam(theta.shape, config)

    def evaluate(th):
        if config.gradient_mode == "analytic":
            return obj.value_and_grad(th)
        return obj.value(th), central_difference(obj.value, th, config.fd_step)

    t0 = obj.value(theta)
    best_theta, best_t = theta.copy(), t0
    warning = None
    done = 0
    for _ in range(config.iterations):
        t, g = evaluate(theta)
        if not (np.isfinite(t) and np.all(np.isfinite(g))):
            warning = f"non-finite objective at iteration {done}; returning best-so-far"
            break
        if t > best_t:
            best_theta, best_t = theta.copy(), t
        theta = theta + adam.step(-g)
        done += 1
    else:
        t = obj.value(theta)
        if np.isfinite(t) and t > best_t:
            best_theta, best_t = theta.copy(), t
    return SelectionResult(
        spec=init if np.array_equal(best_theta, theta0) else obj.spec(best_theta),
        initial_spec=init,
        t_initial=float(t0),
        t_final=float(best_t),
        iterations=done,
        warning=warning,
    )


def split_train_test(X, Y, train_fraction=0.5, rng=None):
    """Random disjoint train/test split applied to both samples."""
    X, Y = check_pair(X, Y)
    if not 0.0 < train_fraction < 1.0:
        raise InputError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(rng)
    m = X.shape[0]
    n_train = int(round(train_fraction * m))
    if n_train < 4 or m - n_train < 4:
        raise InputError("both halves need at least 4 points")
    ix, iy = rng.permutation(m), rng.permutation(m)
    return (X[ix[:n_train]], Y[iy[:n_train]]), (X[ix[n_train:]], Y[iy[n_train:]])
