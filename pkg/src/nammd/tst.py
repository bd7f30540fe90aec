"""Permutation two-sample tests (closeness level zero).

The pooled 2m x 2m Gram matrix is built once per kernel. Every permuted split
then reduces to block sums over that matrix: with a 0/1 indicator row ``a`` for
the first half, ``sum_{i != j in X} k_ij = a G a - a diag(G)`` and similarly for
the second half and the cross block. All B splits are evaluated with one
matrix product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from nammd.dct import TestOutcome, empirical_quantile
from nammd.errors import ConfigError, InputError
from nammd.kernels import KernelSpec, check_pair, kernel_matrix, median_heuristic

STATISTICS = ("nammd", "mmd2", "fuse")


@dataclass(frozen=True)
class PermutationPlan:
    """B random permutations of the pooled sample, reproducible from ``seed``."""

    B: int = 200
    seed: int | None = 0

    def __post_init__(self):
        if not (isinstance(self.B, (int, np.integer)) and self.B >= 1):
            raise ConfigError(f"B must be a positive integer, got {self.B!r}")

    def draw(self, pooled_size):
        rng = np.random.default_rng(self.seed)
        base = np.tile(np.arange(pooled_size), (self.B, 1))
        return rng.permuted(base, axis=1)


@dataclass(frozen=True)
class KernelBank:
    """Kernels with prior weights and soft-max temperature for the FUSE statistic.

    ``lam=None`` means ``sqrt(m (m - 1))``, resolved at evaluation time.
    """

    kernels: tuple = ()
    weights: np.ndarray | None = field(default=None, compare=False)
    lam: float | None = None

    def __post_init__(self):
        kernels = tuple(self.kernels)
        if not kernels:
            raise ConfigError("kernel bank is empty")
        if not all(isinstance(k, KernelSpec) for k in kernels):
            raise ConfigError("kernel bank entries must be KernelSpec instances")
        w = np.full(len(kernels), 1.0 / len(kernels)) if self.weights is None else np.asarray(self.weights, float)
        if w.shape != (len(kernels),) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError("bank weights must be a probability vector matching the kernels")
        if self.lam is not None and not (np.isfinite(self.lam) and self.lam > 0):
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "weights", w)

    def temperature(self, m):
        return math.sqrt(m * (m - 1.0)) if self.lam is None else float(self.lam)


def default_bank(X, Y, scales=(0.25, 0.5, 1.0, 2.0, 4.0), lam=None):
    """Gaussian and Laplace kernels at multiples of the median-heuristic bandwidth."""
    med = median_heuristic(X, Y, max_points=1000)
    kernels = [KernelSpec.gaussian(med * s) for s in scales]
    kernels += [KernelSpec.laplace(med * s) for s in scales]
    return KernelBank(tuple(kernels), lam=lam)


# ---------------------------------------------------------------------------
# split statistics from a pooled Gram matrix


def _check_perms(perms, n):
    perms = np.atleast_2d(np.asarray(perms))
    if perms.shape[1] != n or not np.issubdtype(perms.dtype, np.integer):
        raise InputError(f"permutations must be integer rows of length {n}")
    if not np.all(np.sort(perms, axis=1) == np.arange(n)):
        raise InputError("each row must be a permutation of 0..2m-1")
    return perms


def _split_sums(G, perms, m):
    """Within-first, within-second (diagonal excluded), cross and paired-trace sums."""
    n = G.shape[0]
    A = np.zeros((perms.shape[0], n))
    np.put_along_axis(A, perms[:, :m], 1.0, axis=1)
    Bm = 1.0 - A
    AG = A @ G
    diag = np.diag(G)
    sxx = np.einsum("bi,bi->b", AG, A) - A @ diag
    sxy = np.einsum("bi,bi->b", AG, Bm)
    syy = np.einsum("bi,bi->b", Bm @ G, Bm) - Bm @ diag
    tr = G[perms[:, :m], perms[:, m:]].sum(axis=1)
    return sxx, syy, sxy, tr


def _split_stats(G, perms, m, K):
    """(mmd2, norm, nhat) for each split, where nhat is the FUSE normalizer."""
    sxx, syy, sxy, tr = _split_sums(G, perms, m)
    denom = m * (m - 1.0)
    mmd2 = (sxx + syy - 2.0 * (sxy - tr)) / denom
    norm = 4.0 * K - (sxx + syy) / denom
    q_xx, q_yy, _, _ = _split_sums(G * G, perms, m)
    nhat = (q_xx + q_yy) / denom
    return mmd2, norm, nhat


def _pooled(X, Y):
    X, Y = check_pair(X, Y)
    return np.vstack([X, Y]), X.shape[0]


def _fuse_from(stats, bank, m):
    lam = bank.temperature(m)
    # rows: kernels, columns: splits
    z = np.array([(mmd2 / norm) / np.sqrt(nhat) for mmd2, norm, nhat in stats])
    a = lam * z + np.log(bank.weights)[:, None]
    top = a.max(axis=0)
    return (top + np.log(np.exp(a - top).sum(axis=0))) / lam


def _statistics(pooled, perms, m, spec_or_bank, which):
    if which not in STATISTICS:
        raise InputError(f"unknown statistic {which!r}; expected one of {STATISTICS}")
    if which == "fuse":
        if not isinstance(spec_or_bank, KernelBank):
            raise ConfigError("the fuse statistic needs a KernelBank")
        stats = [_split_stats(kernel_matrix(k, pooled, pooled), perms, m, k.K) for k in spec_or_bank.kernels]
        return {"fuse": _fuse_from(stats, spec_or_bank, m)}
    if not isinstance(spec_or_bank, KernelSpec):
        raise ConfigError(f"the {which} statistic needs a single KernelSpec")
    G = kernel_matrix(spec_or_bank, pooled, pooled)
    mmd2, norm, _ = _split_stats(G, perms, m, spec_or_bank.K)
    return {"mmd2": mmd2, "nammd": mmd2 / norm}


def permuted_statistic(pooled, perm, spec_or_bank, which="nammd"):
    """Statistic of the split (first m vs last m) of ``pooled[perm]``."""
    pooled = np.asarray(pooled, dtype=float)
    if pooled.ndim == 1:
        pooled = pooled[:, None]
    n = pooled.shape[0]
    if n % 2 or n < 4:
        raise InputError("pooled sample must have even size 2m with m >= 2")
    perms = _check_perms(perm, n)
    return float(_statistics(pooled, perms, n // 2, spec_or_bank, which)[which][0])


def fuse_statistic(X, Y, bank):
    """(1/lam) log sum_k w_k exp(lam * NAMMD_k / sqrt(N_k)), log-sum-exp stabilized."""
    pooled, m = _pooled(X, Y)
    ident = np.arange(2 * m)[None, :]
    return float(_statistics(pooled, ident, m, bank, "fuse")["fuse"][0])


def _outcome(observed, null_stats, alpha, m, which, seed):
    threshold = empirical_quantile(null_stats, alpha)
    p_value = (1.0 + np.count_nonzero(null_stats >= observed)) / (null_stats.size + 1.0)
    return TestOutcome(
        statistic=float(observed),
        threshold=float(threshold),
        p_value=float(p_value),
        reject=bool(observed > threshold),
        alpha=alpha,
        epsilon=0.0,
        m=m,
        method=f"{which}_permutation",
        seed=seed,
    )


def _run(X, Y, spec_or_bank, which_list, alpha, plan):
    if not 0.0 < alpha < 1.0:
        raise InputError(f"alpha must lie in (0, 1), got {alpha}")
    plan = plan or PermutationPlan()
    pooled, m = _pooled(X, Y)
    perms = np.vstack([np.arange(2 * m)[None, :], plan.draw(2 * m)])
    out = {}
    cache = None
    for which in which_list:
        if which in ("nammd", "mmd2") and cache is not None:
            values = cache[which]
        else:
            stats = _statistics(pooled, perms, m, spec_or_bank, which)
            if which != "fuse":
                cache = stats
            values = stats[which]
        out[which] = _outcome(values[0], values[1:], alpha, m, which, plan.seed)
    return out


def permutation_test(X, Y, spec_or_bank, which="nammd", alpha=0.05, plan=None):
    """Permutation test of P = Q.

    threshold is the empirical (1 - alpha) quantile of the B permuted statistics
    and ``reject = statistic > threshold``. The reported p-value is the
    +1-corrected tail fraction; it can exceed alpha by at most 1/(B+1) on a
    rejection because the two conventions count ties differently.
    """
    return _run(X, Y, spec_or_bank, [which], alpha, plan)[which]


def paired_permutation_test(X, Y, spec, alpha=0.05, plan=None):
    """NAMMD and MMD^2 tests on the same Gram matrix and the same permutations."""
    return _run(X, Y, spec, ["nammd", "mmd2"], alpha, plan)
