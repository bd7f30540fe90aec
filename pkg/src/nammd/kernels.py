"""Bounded translation-invariant kernels and Gram-matrix construction.

All three families (Gaussian, Laplace, Mahalanobis) satisfy
``0 <= k(x, y) <= K`` with ``k(x, x) = K = 1``.

Bandwidth convention: ``gamma`` is the scale in ``exp(-||x-y||^2 / (2 gamma^2))``.
The kernel ``exp(-||x-y||^2)`` is therefore ``gamma = 1/sqrt(2)``
(:data:`UNIT_EXPONENT_BANDWIDTH`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from nammd.errors import DegenerateInputError, InputError

FAMILIES = ("gaussian", "laplace", "mahalanobis")

#: gamma for which the Gaussian kernel equals exp(-||x - y||^2)
UNIT_EXPONENT_BANDWIDTH = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class KernelSpec:
    """A bounded kernel: family, bandwidth, optional metric matrix and sup bound K."""

    family: str = "gaussian"
    bandwidth: float = 1.0
    metric: np.ndarray | None = field(default=None, compare=False, repr=False)
    upper_bound: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise InputError(f"bandwidth must be positive and finite, got {self.bandwidth}")
        if not (np.isfinite(self.upper_bound) and self.upper_bound > 0):
            raise InputError("upper_bound must be positive")
        if self.family == "mahalanobis":
            if self.metric is None:
                raise InputError("mahalanobis kernel needs a metric matrix")
            M = np.atleast_2d(np.asarray(self.metric, dtype=float))
            if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, rtol=0, atol=1e-12):
                raise InputError("metric matrix must be square and symmetric")
            if np.linalg.eigvalsh(M).min() <= 0:
                raise InputError("metric matrix must be positive definite")
            object.__setattr__(self, "metric", M)
        elif self.metric is not None:
            raise InputError(f"{self.family} kernel takes no metric matrix")

    @classmethod
    def gaussian(cls, bandwidth):
        return cls("gaussian", float(bandwidth))

    @classmethod
    def laplace(cls, bandwidth):
        return cls("laplace", float(bandwidth))

    @classmethod
    def mahalanobis(cls, metric, bandwidth=1.0):
        return cls("mahalanobis", float(bandwidth), np.asarray(metric, dtype=float))

    @property
    def K(self):
        return self.upper_bound

    def with_bandwidth(self, bandwidth):
        return KernelSpec(self.family, float(bandwidth), self.metric, self.upper_bound)


def as_sample(X, name="sample", min_size=2):
    """Coerce ``X`` to an ``(m, d)`` float array and validate it."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"{name} must be 1-D or 2-D, got shape {X.shape}")
    if X.shape[0] < min_size:
        raise InputError(f"{name} needs at least {min_size} points, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise InputError(f"{name} contains non-finite entries")
    return X


def _metric_transform(spec, A):
    # (x-y)^T M (x-y) = ||L^T x - L^T y||^2 with M = L L^T
    L = np.linalg.cholesky(spec.metric)
    if L.shape[0] != A.shape[1]:
        raise InputError(f"metric is {L.shape[0]}-dimensional but points are {A.shape[1]}-dimensional")
    return A @ L


def _exponent(spec, A, B):
    """Return the nonnegative argument ``e`` with ``k = K exp(-e)``."""
    if spec.family == "gaussian":
        return cdist(A, B, "sqeuclidean") / (2.0 * spec.bandwidth**2)
    if spec.family == "laplace":
        return cdist(A, B, "cityblock") / spec.bandwidth
    At, Bt = _metric_transform(spec, A), _metric_transform(spec, B)
    return cdist(At, Bt, "sqeuclidean") / (2.0 * spec.bandwidth**2)


def kernel_matrix(spec, A, B):
    """Dense matrix ``[k(a_i, b_j)]`` for two point sets of equal dimension."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise InputError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    E = _exponent(spec, A, B)
    np.negative(E, out=E)
    np.exp(E, out=E)
    if spec.upper_bound != 1.0:
        E *= spec.upper_bound
    return E


def eval_kernel(spec, x, y):
    """Evaluate ``k(x, y)`` for two single points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.ndim != 1 or y.ndim != 1:
        raise InputError("eval_kernel takes two single points")
    if x.shape != y.shape:
        raise InputError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("non-finite input")
    return float(kernel_matrix(spec, x[None, :], y[None, :])[0, 0])


@dataclass(frozen=True)
class GramBlock:
    """Within-X, within-Y and cross kernel matrices of an equal-size sample pair."""

    kxx: np.ndarray
    kyy: np.ndarray
    kxy: np.ndarray
    K: float = 1.0

    def __post_init__(self):
        m = self.kxx.shape[0]
        for name in ("kxx", "kyy", "kxy"):
            a = getattr(self, name)
            if a.shape != (m, m):
                raise InputError(f"{name} has shape {a.shape}, expected {(m, m)}")

    @property
    def m(self):
        return self.kxx.shape[0]


def check_pair(X, Y):
    X = as_sample(X, "X")
    Y = as_sample(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise InputError(f"X is {X.shape[1]}-dimensional but Y is {Y.shape[1]}-dimensional")
    if X.shape[0] != Y.shape[0]:
        raise InputError(f"samples must have equal size, got {X.shape[0]} and {Y.shape[0]}")
    return X, Y


def gram_blocks(spec, X, Y):
    """Materialize the three m x m Gram matrices for samples ``X`` and ``Y``."""
    X, Y = check_pair(X, Y)
    return GramBlock(
        kernel_matrix(spec, X, X),
        kernel_matrix(spec, Y, Y),
        kernel_matrix(spec, X, Y),
        spec.upper_bound,
    )


def median_heuristic(X, Y=None, max_points=None):
    """Median pairwise Euclidean distance of the pooled sample.

    ``max_points`` caps the pooled size (leading points are kept), which keeps
    the O(n^2) distance list manageable for large i.i.d. samples.
    """
    Z = as_sample(X, "X", min_size=1)
    if Y is not None:
        Y = as_sample(Y, "Y", min_size=1)
        if Y.shape[1] != Z.shape[1]:
            raise InputError("dimension mismatch between X and Y")
        Z = np.vstack([Z, Y])
    if max_points is not None and Z.shape[0] > max_points:
        Z = Z[:max_points]
    if Z.shape[0] < 2:
        raise DegenerateInputError("median heuristic needs at least two points")
    gamma = float(np.median(pdist(Z, "euclidean")))
    if not gamma > 0:
        raise DegenerateInputError("median pairwise distance is zero (points identical)")
    return gamma
