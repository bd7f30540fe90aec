"""Distributions and datasets for the experiments.

* TV-controlled discrete pairs against a uniform distribution.
* Point sets whose uniform distributions hit a target NAMMD (gradient descent
  on ``(NAMMD - eps)^2``), and reference/test pairs built from them.
* Blob and high-dimensional Gaussian-mixture generators.
* Dirac pairs and the constant-MMD Gaussian sweep.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from nammd.errors import InfeasibleTargetError, InputError
from nammd.estimators import (
    DiscretePair,
    exact_discrete_mmd2,
    exact_discrete_nammd,
    exact_discrete_norms,
    gaussian_moment_oracle,
)
from nammd.kernels import KernelSpec, as_sample, kernel_matrix
from nammd.optim import Adam, OptimizerConfig, central_difference

# ---------------------------------------------------------------------------
# total-variation pairs


def uniform_with_tv(support, eps_prime, rng=None):
    """Uniform ``p`` and a ``q`` at total variation exactly ``eps_prime`` from it.

    Mass ``eps_prime`` is taken evenly off ``ceil(eps_prime * n)`` random
    elements (at most ``1/n`` each, so ``q >= 0``) and spread evenly over the
    rest. Feasible for ``0 <= eps_prime <= 1 - 1/n``.
    """
    if isinstance(support, (int, np.integer)):
        support = np.arange(support, dtype=float)
    Z = np.asarray(support, dtype=float)
    n = Z.shape[0]
    if n < 2:
        raise InputError("support needs at least 2 points")
    if not (0.0 <= eps_prime <= (n - 1.0) / n):
        raise InputError(f"eps_prime must lie in [0, {(n - 1) / n:.6g}] for n = {n}, got {eps_prime}")
    p = np.full(n, 1.0 / n)
    q = p.copy()
    if eps_prime > 0:
        k = min(math.ceil(round(eps_prime * n, 9)), n - 1)
        order = np.arange(n) if rng is None else np.random.default_rng(rng).permutation(n)
        down, up = order[:k], order[k:]
        q[down] -= eps_prime / k
        q[up] += eps_prime / (n - k)
        q = np.clip(q, 0.0, None)
        q /= q.sum()
    return DiscretePair(Z, p, q)


def draw_indices(pair, m, rng):
    """Indices of ``m`` i.i.d. draws from each of ``pair.p`` and ``pair.q``."""
    rng = np.random.default_rng(rng)
    ix = rng.choice(pair.n, size=m, p=pair.p)
    iy = rng.choice(pair.n, size=m, p=pair.q)
    return ix, iy


def dirac_pair(z0, zi):
    """Point masses at ``z0`` and ``zi`` on the two-point support ``{z0, zi}``."""
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    zi = np.atleast_1d(np.asarray(zi, dtype=float))
    if z0.shape != zi.shape:
        raise InputError("points must share a dimension")
    return DiscretePair(np.vstack([z0, zi]), np.array([1.0, 0.0]), np.array([0.0, 1.0]))


# ---------------------------------------------------------------------------
# exact NAMMD of uniform point sets and its gradient


def _uniform_terms(Z, Zp, spec):
    kzz = kernel_matrix(spec, Z, Z)
    kpp = kernel_matrix(spec, Zp, Zp)
    kzp = kernel_matrix(spec, Z, Zp)
    return kzz, kpp, kzp


def uniform_nammd(Z, Zp, spec):
    """(NAMMD, MMD^2, ||mu_P||^2 + ||mu_Q||^2) for uniform distributions on two point sets."""
    kzz, kpp, kzp = _uniform_terms(Z, Zp, spec)
    a, b, c = kzz.mean(), kpp.mean(), kzp.mean()
    mmd2 = a + b - 2 * c
    return mmd2 / (4 * spec.K - a - b), mmd2, a + b


def _gaussian_grads(Z, Zp, spec, kzz, kpp, kzp):
    # d/dz_i of the mean kernel values under exp(-|z - z'|^2 / (2 g^2))
    g2 = spec.bandwidth**2
    m, mp = Z.shape[0], Zp.shape[0]
    da = -(2.0 / (m * m * g2)) * (kzz.sum(1)[:, None] * Z - kzz @ Z)
    db = -(2.0 / (mp * mp * g2)) * (kpp.sum(1)[:, None] * Zp - kpp @ Zp)
    dc_z = -(1.0 / (m * mp * g2)) * (kzp.sum(1)[:, None] * Z - kzp @ Zp)
    dc_p = -(1.0 / (m * mp * g2)) * (kzp.sum(0)[:, None] * Zp - kzp.T @ Z)
    return da, db, dc_z, dc_p


@dataclass(frozen=True)
class TargetResult:
    Z: np.ndarray
    Zp: np.ndarray
    achieved: float
    mmd2: float
    norm_sum: float
    converged: bool
    iterations: int
    message: str = ""

    def pair(self):
        return DiscretePair.from_point_sets(self.Z, self.Zp)


def learn_target_nammd(
    Z_init,
    Zp_init,
    spec,
    epsilon,
    config=None,
    tol=1e-3,
    target_norm_sum=None,
    norm_tol=1e-3,
    norm_weight=1.0,
):
    """Move two point sets until NAMMD of their uniform distributions equals ``epsilon``.

    Minimizes ``(NAMMD - eps)^2``, optionally plus
    ``norm_weight * (||mu_P||^2 + ||mu_Q||^2 - target_norm_sum)^2``, with Adam.
    Stops once ``|NAMMD - eps| <= tol`` (and the norm sum is within ``norm_tol``
    when targeted) or after ``config.iterations`` steps. The step size is halved
    whenever the NAMMD error changes sign, which damps Adam's overshoot near the
    target. Gaussian kernels use the analytic gradient, others central differences.
    """
    if not 0.0 < epsilon < 1.0:
        raise InputError(f"epsilon must lie in (0, 1), got {epsilon}")
    config = config or OptimizerConfig(step_size=0.03, iterations=5000)
    Z = as_sample(Z_init, "Z", min_size=1).copy()
    Zp = as_sample(Zp_init, "Zp", min_size=1).copy()
    if Z.shape[1] != Zp.shape[1]:
        raise InputError("point sets must share a dimension")
    m = Z.shape[0]
    K = spec.K
    analytic = spec.family == "gaussian" and config.gradient_mode == "analytic"

    def loss_of(theta):
        f, _, S = uniform_nammd(theta[:m], theta[m:], spec)
        out = (f - epsilon) ** 2
        if target_norm_sum is not None:
            out += norm_weight * (S - target_norm_sum) ** 2
        return out

    def done(f, S):
        ok = abs(f - epsilon) <= tol
        if target_norm_sum is not None:
            ok = ok and abs(S - target_norm_sum) <= norm_tol
        return ok

    theta = np.vstack([Z, Zp])
    adam = Adam(theta.shape, config)
    best = None
    last_sign = 0
    for it in range(config.iterations + 1):
        kzz, kpp, kzp = _uniform_terms(theta[:m], theta[m:], spec)
        a, b, c = kzz.mean(), kpp.mean(), kzp.mean()
        den = 4 * K - a - b
        f = (a + b - 2 * c) / den
        S = a + b
        loss = (f - epsilon) ** 2 + (0 if target_norm_sum is None else norm_weight * (S - target_norm_sum) ** 2)
        if not (np.isfinite(loss) and np.all(np.isfinite(theta))):
            break
        if best is None or loss < best[0]:
            best = (loss, theta.copy(), f, a + b - 2 * c, S, it)
        if done(f, S):
            return _target_result(theta, m, f, a + b - 2 * c, S, True, it)
        if it == config.iterations:
            break
        sign = int(np.sign(f - epsilon))
        if last_sign and sign != last_sign:
            adam.lr *= 0.5
        last_sign = sign
        if analytic:
            da, db, dcz, dcp = _gaussian_grads(theta[:m], theta[m:], spec, kzz, kpp, kzp)
            num = a + b - 2 * c
            # f = num / den with d num = da + db - 2 dc and d den = -(da + db)
            df_z = ((da - 2 * dcz) * den + num * da) / den**2
            df_p = ((db - 2 * dcp) * den + num * db) / den**2
            g = 2 * (f - epsilon) * np.vstack([df_z, df_p])
            if target_norm_sum is not None:
                g += 2 * norm_weight * (S - target_norm_sum) * np.vstack([da, db])
        else:
            g = central_difference(loss_of, theta, config.fd_step)
        theta = theta + adam.step(g)
    loss, theta_b, f_b, mmd2_b, S_b, it_b = best
    msg = f"no convergence within {config.iterations} iterations; returning best iterate ({it_b})"
    return _target_result(theta_b, m, f_b, mmd2_b, S_b, False, it, msg)


def _target_result(theta, m, f, mmd2, S, converged, it, msg=""):
    return TargetResult(
        Z=theta[:m].copy(),
        Zp=theta[m:].copy(),
        achieved=float(f),
        mmd2=float(mmd2),
        norm_sum=float(S),
        converged=converged,
        iterations=it,
        message=msg,
    )


def initial_point_sets(m, d, rng, spread=1.0, offset=1.0):
    """Two Gaussian clouds, the second shifted by ``offset`` along the first axis."""
    rng = np.random.default_rng(rng)
    Z = rng.normal(scale=spread, size=(m, d))
    Zp = rng.normal(scale=spread, size=(m, d))
    Zp[:, 0] += offset
    return Z, Zp


@dataclass(frozen=True)
class ClosenessConstruction:
    """Reference pair at NAMMD = eps and a test pair at NAMMD = eps + gap.

    The test pair has a strictly larger norm sum and a strictly larger MMD^2,
    which is the configuration under which the NAMMD test should dominate.
    """

    reference: DiscretePair
    test: DiscretePair
    gram: np.ndarray
    epsilon_n: float
    epsilon_m: float
    test_nammd: float
    test_mmd2: float
    reference_norm_sum: float
    test_norm_sum: float


def _combined(ref, test):
    """Both pairs embedded in one support so a single Gram matrix serves both."""
    supp = np.vstack([ref.Z, ref.Zp, test.Z, test.Zp])
    a, b, c, d = (len(x) for x in (ref.Z, ref.Zp, test.Z, test.Zp))
    n = a + b + c + d

    def uniform(lo, size):
        v = np.zeros(n)
        v[lo : lo + size] = 1.0 / size
        return v

    p1, q1 = uniform(0, a), uniform(a, b)
    p2, q2 = uniform(a + b, c), uniform(a + b + c, d)
    return supp, DiscretePair(supp, p1, q1), DiscretePair(supp, p2, q2)


def learn_from_fresh_starts(m_points, d, spec, epsilon, rng, config=None, tol=1e-4, attempts=3):
    """Run target learning from up to ``attempts`` random initializations drawn from ``rng``.

    A single start can stall in a flat region of the kernel (one cloud collapsed,
    the other spread out), so non-converged runs are retried from a new draw.
    Returns the first converged result, else the last one.
    """
    if attempts < 1:
        raise InputError("attempts must be at least 1")
    for _ in range(attempts):
        Z0, Zp0 = initial_point_sets(m_points, d, rng)
        res = learn_target_nammd(Z0, Zp0, spec, epsilon, config, tol=tol)
        if res.converged:
            break
    return res


def closeness_construction(epsilon, spec, m_points=50, d=2, gap=0.01, rng=None, config=None, tol=1e-4,
                           attempts=3):
    """Build the reference/test pairs for a power comparison at closeness level ``epsilon``.

    The test pair targets the midpoint of the norm-sum window
    ``(S1, S1 + (4K - S1) * gap / (eps + gap))``, where both
    ``S2 > S1`` and ``MMD^2_2 > MMD^2_1`` hold.
    """
    rng = np.random.default_rng(rng)
    K = spec.K
    ref = learn_from_fresh_starts(m_points, d, spec, epsilon, rng, config, tol, attempts)
    if not ref.converged:
        raise InfeasibleTargetError(f"reference pair did not reach NAMMD {epsilon}: {ref.message}")
    S1 = ref.norm_sum
    width = (4 * K - S1) * gap / (epsilon + gap)
    target_S = S1 + 0.5 * width
    test = learn_target_nammd(
        ref.Z, ref.Zp, spec, epsilon + gap, config, tol=tol,
        target_norm_sum=target_S, norm_tol=0.1 * width,
    )
    if not test.converged:
        raise InfeasibleTargetError(f"test pair did not reach NAMMD {epsilon + gap}: {test.message}")
    supp, p_ref, p_test = _combined(ref, test)
    G = kernel_matrix(spec, supp, supp)
    eps_n = exact_discrete_nammd(p_ref, G, K)
    eps_m = exact_discrete_mmd2(p_ref, G)
    t_n = exact_discrete_nammd(p_test, G, K)
    t_m = exact_discrete_mmd2(p_test, G)
    s1 = sum(exact_discrete_norms(p_ref, G)[:2])
    s2 = sum(exact_discrete_norms(p_test, G)[:2])
    if not (t_m > eps_m and s2 > s1):
        raise InfeasibleTargetError("constructed test pair violates the MMD or norm ordering")
    return ClosenessConstruction(p_ref, p_test, G, eps_n, eps_m, t_n, t_m, s1, s2)


# ---------------------------------------------------------------------------
# continuous generators


@dataclass(frozen=True)
class BlobConfig:
    grid_side: int = 3
    cell_spacing: float = 5.0
    null_covariance: np.ndarray = field(default_factory=lambda: np.eye(2))
    alt_covariance: np.ndarray = field(default_factory=lambda: np.array([[1.0, 0.6], [0.6, 1.0]]))

    def __post_init__(self):
        if not (isinstance(self.grid_side, (int, np.integer)) and self.grid_side >= 1):
            raise InputError("grid_side must be a positive integer")
        for name in ("null_covariance", "alt_covariance"):
            C = np.asarray(getattr(self, name), dtype=float)
            if C.shape != (2, 2) or not np.allclose(C, C.T) or np.linalg.eigvalsh(C).min() <= 0:
                raise InputError(f"{name} must be a 2x2 SPD matrix")
            object.__setattr__(self, name, C)

    def centers(self):
        g = np.arange(self.grid_side) * self.cell_spacing
        return np.array([(a, b) for a in g for b in g])


def _mixture(centers, cov, m, rng):
    comp = rng.integers(len(centers), size=m)
    return centers[comp] + rng.multivariate_normal(np.zeros(centers.shape[1]), cov, size=m)


def blob_pair(cfg=None, m=100, rng=None, null=False):
    """Grid of Gaussian blobs; the second sample uses the tilted covariance unless ``null``."""
    cfg = cfg or BlobConfig()
    if m < 4:
        raise InputError("m must be at least 4")
    rng = np.random.default_rng(rng)
    c = cfg.centers()
    X = _mixture(c, cfg.null_covariance, m, rng)
    Y = _mixture(c, cfg.null_covariance if null else cfg.alt_covariance, m, rng)
    return X, Y


@dataclass(frozen=True)
class HDGMConfig:
    dimension: int = 10
    separation: float = 1.0
    shift: float = 0.5
    shifted_coordinates: int = 2

    def __post_init__(self):
        if self.dimension < 2 or not 1 <= self.shifted_coordinates <= self.dimension:
            raise InputError("need dimension >= 2 and 1 <= shifted_coordinates <= dimension")


def hdgm_pair(cfg=None, m=100, rng=None, null=False):
    """Two-component Gaussian mixture; the second sample's means move in a few coordinates."""
    cfg = cfg or HDGMConfig()
    if m < 4:
        raise InputError("m must be at least 4")
    rng = np.random.default_rng(rng)
    d = cfg.dimension
    centers = np.zeros((2, d))
    centers[1] = cfg.separation
    X = _mixture(centers, np.eye(d), m, rng)
    shifted = centers.copy()
    if not null:
        shifted[:, : cfg.shifted_coordinates] += cfg.shift
    Y = _mixture(shifted, np.eye(d), m, rng)
    return X, Y


# ---------------------------------------------------------------------------
# constant-MMD Gaussian sweep


def constant_mmd_gaussian_sweep(variance, target_mmd2, gamma):
    """Mean gap between N(0, s^2) and N(gap, s^2) giving MMD^2 = ``target_mmd2``.

    MMD^2 rises monotonically in the gap toward ``2 ||mu||^2``; targets at or above
    that bound are infeasible.
    """
    if not variance > 0 or not gamma > 0:
        raise InputError("variance and gamma must be positive")
    if target_mmd2 < 0:
        raise InputError("target MMD^2 must be nonnegative")
    if target_mmd2 == 0:
        return 0.0
    sup = 2.0 * gaussian_moment_oracle(variance, variance, 0.0, gamma)[0]
    if target_mmd2 >= sup:
        raise InfeasibleTargetError(
            f"MMD^2 = {target_mmd2} is unreachable at variance {variance} (supremum {sup:.6g})"
        )

    def f(gap):
        return gaussian_moment_oracle(variance, variance, gap, gamma)[3] - target_mmd2

    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
    return float(brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))


# ---------------------------------------------------------------------------
# export


def export_csv(path, X, Y, labels=(0, 1)):
    """Write both samples to one CSV, one point per row, sample label in the last column."""
    X = as_sample(X, "X", min_size=1)
    Y = as_sample(Y, "Y", min_size=1)
    if X.shape[1] != Y.shape[1]:
        raise InputError("samples must share a dimension")
    data = np.vstack([
        np.column_stack([X, np.full(len(X), labels[0])]),
        np.column_stack([Y, np.full(len(Y), labels[1])]),
    ])
    header = ",".join([f"x{j}" for j in range(X.shape[1])] + ["label"])
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        np.savetxt(fh, data, delimiter=",", header=header, comments="", fmt="%.17g")
    os.replace(tmp, path)
