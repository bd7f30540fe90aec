"""Norm-adaptive MMD: closeness and two-sample testing with kernel mean embeddings."""

from nammd.dct import TestOutcome, canonne_dct, canonne_statistic, mmd_dct, nammd_dct, reference_epsilon
from nammd.estimators import (
    DiscretePair,
    EstimatorReport,
    estimate,
    exact_discrete_mmd2,
    exact_discrete_nammd,
    gaussian_moment_oracle,
    mmd2_u_statistic,
    nammd_u_statistic,
    norm_u_statistic,
    ratio_sigma_estimator,
    sigma_estimator,
    tv_distance,
    variance_components,
)
from nammd.kernels import GramBlock, KernelSpec, eval_kernel, gram_blocks, median_heuristic
from nammd.tst import KernelBank, PermutationPlan, fuse_statistic, permutation_test

__version__ = "0.1.0"
