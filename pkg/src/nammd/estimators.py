"""U-statistics for MMD^2, the embedding-norm term and NAMMD, plus their variance.

Every statistic here is a function of a handful of Gram-matrix reductions
(row sums, column sums, Frobenius norms and the trace of the cross block).
:class:`GramSummary` holds those reductions, so the same formulas serve dense
Gram blocks, samples too large to materialize (blockwise accumulation) and
samples drawn from a finite support (indexing into a small support Gram).

"MMD" always means the squared discrepancy in this package.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from nammd.errors import InputError
from nammd.kernels import GramBlock, check_pair, kernel_matrix

# row-block height for summarize_samples; bounds memory at ~block * m floats
DEFAULT_BLOCK_ROWS = 1024


@dataclass(frozen=True)
class GramSummary:
    """Sufficient reductions of a :class:`GramBlock`.

    ``rxx`` and ``ryy`` are row sums of the within-sample blocks with the diagonal
    removed; ``rxy``/``cxy`` are row/column sums of the full cross block;
    ``fxx``/``fyy`` are squared Frobenius norms with the diagonal removed,
    ``fxy`` the full cross-block one and ``trace_xy`` its diagonal sum.
    """

    m: int
    K: float
    rxx: np.ndarray
    ryy: np.ndarray
    rxy: np.ndarray
    cxy: np.ndarray
    fxx: float
    fyy: float
    fxy: float
    trace_xy: float

    @classmethod
    def from_blocks(cls, g: GramBlock) -> GramSummary:
        dxx, dyy = np.diag(g.kxx), np.diag(g.kyy)
        return cls(
            m=g.m,
            K=g.K,
            rxx=g.kxx.sum(axis=1) - dxx,
            ryy=g.kyy.sum(axis=1) - dyy,
            rxy=g.kxy.sum(axis=1),
            cxy=g.kxy.sum(axis=0),
            fxx=float(np.sum(g.kxx**2) - np.sum(dxx**2)),
            fyy=float(np.sum(g.kyy**2) - np.sum(dyy**2)),
            fxy=float(np.sum(g.kxy**2)),
            trace_xy=float(np.trace(g.kxy)),
        )

    # totals over i != j (within blocks) and over all (i, j) (cross block)
    @property
    def sxx(self):
        return float(self.rxx.sum())

    @property
    def syy(self):
        return float(self.ryy.sum())

    @property
    def sxy(self):
        return float(self.rxy.sum())


def summarize(g):
    """Accept a :class:`GramBlock` or :class:`GramSummary`; return the summary."""
    if isinstance(g, GramSummary):
        return g
    if isinstance(g, GramBlock):
        return GramSummary.from_blocks(g)
    raise InputError(f"expected GramBlock or GramSummary, got {type(g).__name__}")


def _self_block_stats(spec, A, block_rows):
    m = A.shape[0]
    r = np.empty(m)
    f = 0.0
    for lo in range(0, m, block_rows):
        hi = min(lo + block_rows, m)
        k = kernel_matrix(spec, A[lo:hi], A)
        idx = np.arange(hi - lo)
        k[idx, lo + idx] = 0.0
        r[lo:hi] = k.sum(axis=1)
        f += float(np.einsum("ij,ij->", k, k))
    return r, f


def summarize_samples(spec, X, Y, block_rows=DEFAULT_BLOCK_ROWS):
    """Build a :class:`GramSummary` without holding any m x m matrix in memory."""
    X, Y = check_pair(X, Y)
    m = X.shape[0]
    rxx, fxx = _self_block_stats(spec, X, block_rows)
    ryy, fyy = _self_block_stats(spec, Y, block_rows)
    rxy = np.empty(m)
    cxy = np.zeros(m)
    fxy = 0.0
    tr = 0.0
    for lo in range(0, m, block_rows):
        hi = min(lo + block_rows, m)
        k = kernel_matrix(spec, X[lo:hi], Y)
        rxy[lo:hi] = k.sum(axis=1)
        cxy += k.sum(axis=0)
        fxy += float(np.einsum("ij,ij->", k, k))
        idx = np.arange(hi - lo)
        tr += float(k[idx, lo + idx].sum())
    return GramSummary(m, spec.upper_bound, rxx, ryy, rxy, cxy, fxx, fyy, fxy, tr)


def summarize_indexed(gpp, gqq, gpq, ix, iy, K=1.0):
    """Summary for samples given as indices into finite supports.

    ``x_i = zp[ix[i]]`` and ``y_j = zq[iy[j]]``; ``gpp``, ``gqq``, ``gpq`` are the
    support Gram matrices. Cost is O(n^2 + m) rather than O(m^2).
    """
    ix = np.asarray(ix)
    iy = np.asarray(iy)
    m = ix.shape[0]
    if iy.shape[0] != m:
        raise InputError("samples must have equal size")
    cx = np.bincount(ix, minlength=gpp.shape[0]).astype(float)
    cy = np.bincount(iy, minlength=gqq.shape[0]).astype(float)
    dp, dq = np.diag(gpp), np.diag(gqq)
    rxx = (gpp @ cx)[ix] - dp[ix]
    ryy = (gqq @ cy)[iy] - dq[iy]
    rxy = (gpq @ cy)[ix]
    cxy = (cx @ gpq)[iy]
    fxx = float(cx @ (gpp**2) @ cx - cx @ dp**2)
    fyy = float(cy @ (gqq**2) @ cy - cy @ dq**2)
    fxy = float(cx @ (gpq**2) @ cy)
    tr = float(gpq[ix, iy].sum())
    return GramSummary(m, float(K), rxx, ryy, rxy, cxy, fxx, fyy, fxy, tr)


def _check_m(m, minimum):
    if m < minimum:
        raise InputError(f"need m >= {minimum}, got m = {m}")


def mmd2_u_statistic(g):
    """Unbiased MMD^2: mean of H_ij over ordered pairs i != j."""
    s = summarize(g)
    _check_m(s.m, 2)
    m = s.m
    return (s.sxx + s.syy - 2.0 * (s.sxy - s.trace_xy)) / (m * (m - 1))


def norm_u_statistic(g):
    """Unbiased estimate of 4K - ||mu_P||^2 - ||mu_Q||^2."""
    s = summarize(g)
    _check_m(s.m, 2)
    m = s.m
    return 4.0 * s.K - (s.sxx + s.syy) / (m * (m - 1))


def nammd_u_statistic(g):
    """Ratio of the MMD^2 and norm U-statistics; always in [-1, 1]."""
    s = summarize(g)
    return mmd2_u_statistic(s) / norm_u_statistic(s)


def _quadratic_terms(s):
    """The scalar reductions that the variance components are linear in."""
    return np.array([
        s.rxx @ s.rxx, s.fxx, s.sxx**2,
        s.ryy @ s.ryy, s.fyy, s.syy**2,
        s.rxy @ s.rxy, s.cxy @ s.cxy, s.fxy, s.sxy**2,
        s.rxx @ s.rxy, s.sxx * s.sxy,
        s.ryy @ s.cxy, s.syy * s.sxy,
    ])


def _quadratic_terms_jvp(s, ds):
    """Directional derivative of :func:`_quadratic_terms` along tangent summary ``ds``."""
    return np.array([
        2 * (s.rxx @ ds.rxx), ds.fxx, 2 * s.sxx * ds.sxx,
        2 * (s.ryy @ ds.ryy), ds.fyy, 2 * s.syy * ds.syy,
        2 * (s.rxy @ ds.rxy), 2 * (s.cxy @ ds.cxy), ds.fxy, 2 * s.sxy * ds.sxy,
        ds.rxx @ s.rxy + s.rxx @ ds.rxy, ds.sxx * s.sxy + s.sxx * ds.sxy,
        ds.ryy @ s.cxy + s.ryy @ ds.cxy, ds.syy * s.sxy + s.syy * ds.sxy,
    ])


def _zeta_coefficients(m):
    m = float(m)
    f3 = m * (m - 1) * (m - 2)
    f4 = f3 * (m - 3)
    a = 1.0 / (m * m * (m - 1))
    b = 1.0 / (m * m * (m - 1) ** 2)
    c = 1.0 / (m * f3)
    # within-sample part shared by X and Y: [r.r, f, S^2]
    w1 = [1 / f3 + 4 / f4, -1 / f3 - 2 / f4, -1 / f4]
    w2 = [4 / f4, 1 / (m * (m - 1)) - 2 / f4, -1 / f4]
    # cross part: [rxy.rxy, cxy.cxy, fxy, Sxy^2]
    x1 = [a + 2 * b, a + 2 * b, -2 * a - 2 * b, -2 * b]
    x2 = [2 * b, 2 * b, 2 / m**2 - 2 * b, -2 * b]
    # mixed part: [r.rxy, S*Sxy], repeated for Y with cxy
    z1 = [-2 * a - 4 * c, 2 * c]
    z2 = [-4 * a - 8 * c, 4 * c]
    c1 = np.array(w1 + w1 + x1 + z1 + z1)
    c2 = np.array(w2 + w2 + x2 + z2 + z2)
    return c1, c2


def variance_components(g):
    """Unbiased estimates of the MMD U-statistic variance components (zeta1, zeta2)."""
    s = summarize(g)
    _check_m(s.m, 4)
    t = _quadratic_terms(s)
    c1, c2 = _zeta_coefficients(s.m)
    return float(c1 @ t), float(c2 @ t)


def mmd_variance(zeta1, zeta2, m):
    """Asymptotic variance of sqrt(m) * MMD^2-hat: ((4m-8) zeta1 + 2 zeta2)/(m-1).

    Can be negative at finite m; callers decide how to floor it.
    """
    return ((4.0 * m - 8.0) * zeta1 + 2.0 * zeta2) / (m - 1.0)


SIGMA_CAP = 2.0


def sigma_estimator(zeta1, zeta2, norm_hat, m):
    """Standard deviation estimate for sqrt(m) * NAMMD-hat.

    A negative radicand is floored to 0 and the result clamped to [0, 2].
    """
    if m < 4:
        raise InputError(f"need m >= 4, got m = {m}")
    v = max(0.0, mmd_variance(zeta1, zeta2, m))
    return float(min(np.sqrt(v) / norm_hat, SIGMA_CAP))


def ratio_sigma_estimator(g):
    """Delta-method standard deviation estimate for sqrt(m) * NAMMD-hat.

    ``sigma_estimator`` divides the MMD^2 spread by the norm as if the norm
    estimate were exact. It is not: NAMMD-hat - f * NORM-hat (f the NAMMD value)
    is a U-statistic with kernel ``(1 + f)(k_xx + k_yy) - k_xy - k_yx``, so its
    variance components follow from the same formulas with the within-sample
    blocks scaled by ``1 + f``. Plugging in f = NAMMD-hat gives a consistent
    estimate; at f = 0 it equals ``sigma_estimator`` (before the cap).
    """
    s = summarize(g)
    _check_m(s.m, 4)
    norm = norm_u_statistic(s)
    a = 1.0 + mmd2_u_statistic(s) / norm
    scaled = replace(s, rxx=a * s.rxx, ryy=a * s.ryy, fxx=a * a * s.fxx, fyy=a * a * s.fyy)
    z1, z2 = variance_components(scaled)
    return float(np.sqrt(max(0.0, mmd_variance(z1, z2, s.m))) / norm)


@dataclass(frozen=True)
class EstimatorReport:
    """Point estimates and spreads of one sample pair.

    ``sigma_hat`` is the plug-in spread with the norm held fixed;
    ``ratio_sigma_hat`` also accounts for the norm estimate's own variance.
    """

    mmd2_hat: float
    norm_hat: float
    nammd_hat: float
    zeta1: float
    zeta2: float
    sigma_hat: float
    m: int
    ratio_sigma_hat: float | None = None

    @property
    def mmd_sigma_hat(self):
        """sqrt of the (floored) MMD^2 variance, i.e. sigma_hat without the norm scaling."""
        return float(np.sqrt(max(0.0, mmd_variance(self.zeta1, self.zeta2, self.m))))


def estimate(g):
    """All point estimates and variance terms for one sample pair (m >= 4)."""
    s = summarize(g)
    _check_m(s.m, 4)
    mmd2 = mmd2_u_statistic(s)
    norm = norm_u_statistic(s)
    z1, z2 = variance_components(s)
    return EstimatorReport(
        mmd2_hat=mmd2,
        norm_hat=norm,
        nammd_hat=mmd2 / norm,
        zeta1=z1,
        zeta2=z2,
        sigma_hat=sigma_estimator(z1, z2, norm, s.m),
        m=s.m,
        ratio_sigma_hat=ratio_sigma_estimator(s),
    )


# ---------------------------------------------------------------------------
# exact population values for finite supports


def _check_prob(v, name):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise InputError(f"{name} must be a vector")
    if np.any(~np.isfinite(v)) or np.any(v < 0):
        raise InputError(f"{name} must be finite and nonnegative")
    if abs(v.sum() - 1.0) > 1e-12:
        raise InputError(f"{name} must sum to 1 (sums to {v.sum():.15g})")
    return v


@dataclass(frozen=True)
class DiscretePair:
    """Two probability vectors ``p`` and ``q`` over a shared finite support."""

    support: np.ndarray
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        Z = np.asarray(self.support, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        p = _check_prob(self.p, "p")
        q = _check_prob(self.q, "q")
        if not (len(p) == len(q) == Z.shape[0]):
            raise InputError("support, p and q must have matching lengths")
        object.__setattr__(self, "support", Z)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def n(self):
        return self.support.shape[0]

    @classmethod
    def from_point_sets(cls, Z, Zp):
        """Uniform distributions on two point sets, embedded in their union."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        Zp = np.atleast_2d(np.asarray(Zp, dtype=float))
        a, b = Z.shape[0], Zp.shape[0]
        p = np.concatenate([np.full(a, 1.0 / a), np.zeros(b)])
        q = np.concatenate([np.zeros(a), np.full(b, 1.0 / b)])
        return cls(np.vstack([Z, Zp]), p, q)

    def gram(self, spec):
        return kernel_matrix(spec, self.support, self.support)


def _check_gram(pair, gram_zz):
    G = np.asarray(gram_zz, dtype=float)
    if G.shape != (pair.n, pair.n):
        raise InputError(f"gram_zz has shape {G.shape}, expected {(pair.n, pair.n)}")
    return G


def exact_discrete_norms(pair, gram_zz):
    """(||mu_P||^2, ||mu_Q||^2, <mu_P, mu_Q>) for a finite-support pair."""
    G = _check_gram(pair, gram_zz)
    return float(pair.p @ G @ pair.p), float(pair.q @ G @ pair.q), float(pair.p @ G @ pair.q)


def exact_discrete_mmd2(pair, gram_zz):
    G = _check_gram(pair, gram_zz)
    d = pair.p - pair.q
    return float(d @ G @ d)


def exact_discrete_nammd(pair, gram_zz, K=1.0):
    npp, nqq, _ = exact_discrete_norms(pair, gram_zz)
    return exact_discrete_mmd2(pair, gram_zz) / (4.0 * K - npp - nqq)


def tv_distance(p, q):
    """Total variation 0.5 * ||p - q||_1."""
    p = _check_prob(p, "p")
    q = _check_prob(q, "q")
    if p.shape != q.shape:
        raise InputError("p and q must have the same length")
    return float(0.5 * np.abs(p - q).sum())


def gaussian_moment_oracle(var_p, var_q, mean_gap, gamma):
    """Closed-form embedding inner products for 1-D Gaussians under a Gaussian kernel.

    Uses E exp(-z^2 / (2 gamma^2)) = gamma / sqrt(gamma^2 + v) * exp(-mu^2 / (2 (gamma^2 + v)))
    for z ~ N(mu, v). Returns ``(||mu_P||^2, ||mu_Q||^2, <mu_P, mu_Q>, MMD^2)``.
    """
    if not (var_p > 0 and var_q > 0):
        raise InputError("variances must be positive")
    if not gamma > 0:
        raise InputError("gamma must be positive")
    g2 = gamma * gamma

    def smoothed(mu, v):
        return gamma / np.sqrt(g2 + v) * np.exp(-(mu * mu) / (2.0 * (g2 + v)))

    norm_p = smoothed(0.0, 2.0 * var_p)
    norm_q = smoothed(0.0, 2.0 * var_q)
    cross = smoothed(mean_gap, var_p + var_q)
    return float(norm_p), float(norm_q), float(cross), float(norm_p + norm_q - 2.0 * cross)
