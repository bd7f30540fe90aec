"""Monte Carlo experiment runners.

Every repetition draws from its own generator,
``SeedSequence(master_seed, spawn_key=(cell, rep))``, so results do not depend
on the thread count or on scheduling order. Cell-level constructions (learned
point sets, TV pairs) use keys disjoint from repetition keys.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import numpy as np
from scipy.stats import norm

from nammd.dct import VARIANCE_MODES, canonne_dct, mmd_dct_from_report, nammd_dct_from_report
from nammd.errors import ConfigError, DegenerateInputError, InfeasibleTargetError, InputError
from nammd.estimators import (
    estimate,
    exact_discrete_mmd2,
    exact_discrete_nammd,
    gaussian_moment_oracle,
    mmd_variance,
    summarize_indexed,
    summarize_samples,
    variance_components,
)
from nammd.harness.config import ExperimentConfig
from nammd.harness.io import ResultRow, emit_results, load_labeled_csv
from nammd.kernels import UNIT_EXPONENT_BANDWIDTH, KernelSpec, kernel_matrix, median_heuristic
from nammd.kernelsel import select_kernel, split_train_test
from nammd.optim import OptimizerConfig
from nammd.synthesis import (
    BlobConfig,
    HDGMConfig,
    blob_pair,
    closeness_construction,
    constant_mmd_gaussian_sweep,
    draw_indices,
    hdgm_pair,
    learn_from_fresh_starts,
    uniform_with_tv,
)
from nammd.tst import PermutationPlan, default_bank, paired_permutation_test, permutation_test

# offsets keep cell-construction seeds apart from repetition seeds
_CONSTRUCTION_KEY = 1_000_000
RECOVERABLE = (InfeasibleTargetError, InputError, DegenerateInputError, FloatingPointError, np.linalg.LinAlgError)


def rng_for(master_seed, *keys):
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in keys)))


def _map(cfg, fn, n):
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            return list(ex.map(fn, range(n)))
    return [fn(r) for r in range(n)]


def _rate_row(cfg, cell, setting, method, m, eps, rejects, stats=None, pvals=None, **extra):
    rejects = np.asarray(rejects, dtype=float)
    n = rejects.size
    r = float(rejects.mean())
    if cfg.outer_repeats > 1:
        std = float(np.std([g.mean() for g in np.array_split(rejects, cfg.outer_repeats)]))
    else:
        std = math.sqrt(r * (1 - r))
    row = ResultRow(
        experiment=cfg.kind,
        cell=cell,
        setting=setting,
        method=method,
        m=m,
        epsilon=eps,
        alpha=cfg.alpha,
        repetitions=n,
        rejection_rate=r,
        stderr=math.sqrt(r * (1 - r) / n),
        std=std,
        **extra,
    )
    if stats is not None:
        stats = np.asarray(stats, dtype=float)
        row.statistic_mean = float(stats.mean())
        row.statistic_std = float(stats.std())
    if pvals is not None:
        row.p_value_median = float(np.median(pvals))
    return row


def _error_row(cfg, cell, setting, method, exc, **extra):
    return ResultRow(cfg.kind, cell, setting, method, alpha=cfg.alpha, error=f"{type(exc).__name__}: {exc}", **extra)


def _variance(cfg):
    mode = cfg.params.get("variance", "delta")
    if mode not in VARIANCE_MODES:
        raise ConfigError(f"params.variance must be one of {VARIANCE_MODES}")
    return mode


def _spec(cfg, X=None, Y=None, default=None):
    if cfg.bandwidth is not None:
        return KernelSpec(cfg.kernel, float(cfg.bandwidth))
    if default is not None:
        return KernelSpec(cfg.kernel, float(default))
    return KernelSpec(cfg.kernel, median_heuristic(X, Y, max_points=1000))


# ---------------------------------------------------------------------------
# two-sample tests


@lru_cache(maxsize=4)
def _csv_data(path):
    return load_labeled_csv(path)


def draw_tst_pair(cfg, m, rng, null):
    p = cfg.params
    if cfg.dataset == "blob":
        keys = ("grid_side", "cell_spacing", "null_covariance", "alt_covariance")
        return blob_pair(BlobConfig(**{k: p[k] for k in keys if k in p}), m, rng, null)
    if cfg.dataset == "hdgm":
        keys = ("dimension", "separation", "shift", "shifted_coordinates")
        return hdgm_pair(HDGMConfig(**{k: p[k] for k in keys if k in p}), m, rng, null)
    X, Y = _csv_data(p["path"])
    if null:
        if 2 * m > len(X):
            raise InputError(f"label-0 rows ({len(X)}) cannot supply two disjoint samples of {m}")
        idx = rng.choice(len(X), size=2 * m, replace=False)
        return X[idx[:m]], X[idx[m:]]
    if m > min(len(X), len(Y)):
        raise InputError(f"m = {m} exceeds the rows available per label")
    return X[rng.choice(len(X), m, replace=False)], Y[rng.choice(len(Y), m, replace=False)]


def _tst(cfg, null):
    methods = list(cfg.params.get("methods", ["nammd", "mmd2"]))
    selection = bool(cfg.params.get("kernel_selection", False))
    rows = []
    for ci, m in enumerate(cfg.sample_sizes):
        t0 = time.perf_counter()

        def rep(r):
            rng = rng_for(cfg.master_seed, ci, r)
            X, Y = draw_tst_pair(cfg, m, rng, null)
            if selection:
                (Xtr, Ytr), (X, Y) = split_train_test(X, Y, rng=rng)
                iters = int(cfg.params.get("selection_iterations", 200))
                spec = select_kernel(Xtr, Ytr, cfg.kernel, OptimizerConfig(iterations=iters)).spec
            else:
                spec = _spec(cfg, X, Y)
            plan = PermutationPlan(cfg.B, int(rng.integers(2**63)))
            out = {}
            if "nammd" in methods or "mmd2" in methods:
                out.update(paired_permutation_test(X, Y, spec, cfg.alpha, plan))
            if "fuse" in methods:
                out["fuse"] = permutation_test(X, Y, default_bank(X, Y), "fuse", cfg.alpha, plan)
            return {k: (o.reject, o.statistic, o.p_value) for k, o in out.items()}

        try:
            results = _map(cfg, rep, cfg.repetitions)
        except RECOVERABLE as exc:
            rows += [_error_row(cfg, ci, cfg.dataset, meth, exc, m=m) for meth in methods]
            continue
        wall = time.perf_counter() - t0 if cfg.include_timing else None
        setting = f"{cfg.dataset};{'null' if null else 'alternative'}"
        for meth in methods:
            rj, st, pv = zip(*(res[meth] for res in results))
            rows.append(_rate_row(cfg, ci, setting, meth, m, 0.0, rj, st, pv, wall_clock_s=wall))
    return rows


# ---------------------------------------------------------------------------
# closeness tests on discrete pairs


def _indexed_report(G, K, pair, m, rng):
    ix, iy = draw_indices(pair, m, rng)
    return estimate(summarize_indexed(G, G, G, ix, iy, K))


def target_pair(epsilon, spec, rng, points=50, d=2, tol=1e-4):
    """Uniform pair on learned point sets with exact NAMMD within ``tol`` of ``epsilon``."""
    res = learn_from_fresh_starts(points, d, spec, epsilon, rng, tol=tol)
    if not res.converged:
        raise InfeasibleTargetError(res.message)
    return res.pair()


def _type1_dct(cfg):
    levels = list(cfg.params.get("levels", [0.25, 1.0]))
    points = int(cfg.params.get("points", 50))
    spec = _spec(cfg, default=1.0)
    rows = []
    cell = 0
    for ei, eps in enumerate(cfg.epsilons):
        for li, level in enumerate(levels):
            try:
                pair = target_pair(level * eps, spec, rng_for(cfg.master_seed, _CONSTRUCTION_KEY + ei, li), points)
            except RECOVERABLE as exc:
                for m in cfg.sample_sizes:
                    rows.append(_error_row(cfg, cell, f"level={level}", "nammd_dct", exc, m=m, epsilon=eps))
                    cell += 1
                continue
            G = pair.gram(spec)
            exact_n = exact_discrete_nammd(pair, G, spec.K)
            exact_m = exact_discrete_mmd2(pair, G)
            for m in cfg.sample_sizes:
                t0 = time.perf_counter()
                ci = cell

                def rep(r):
                    report = _indexed_report(G, spec.K, pair, m, rng_for(cfg.master_seed, ci, r))
                    a = nammd_dct_from_report(report, eps, cfg.alpha, variance=_variance(cfg))
                    b = mmd_dct_from_report(report, exact_m, cfg.alpha) if level == 1.0 else None
                    return a, b

                res = _map(cfg, rep, cfg.repetitions)
                wall = time.perf_counter() - t0 if cfg.include_timing else None
                a = [x[0] for x in res]
                rows.append(_rate_row(
                    cfg, ci, f"level={level}", "nammd_dct", m, eps,
                    [o.reject for o in a], [o.statistic for o in a], [o.p_value for o in a],
                    value=exact_n, wall_clock_s=wall,
                ))
                if level == 1.0:
                    b = [x[1] for x in res]
                    rows.append(_rate_row(
                        cfg, ci, f"level={level}", "mmd_dct", m, exact_m,
                        [o.reject for o in b], [o.statistic for o in b], [o.p_value for o in b],
                        value=exact_m, wall_clock_s=wall,
                    ))
                cell += 1
    return rows


def calibrate_sample_size(cons, alpha, target_power=0.75, pilot_m=20000, rng=None):
    """Sample size at which the MMD closeness test has the target asymptotic power.

    Uses the exact MMD^2 gap of the construction and a pilot estimate of sigma_M.
    """
    report = _indexed_report(cons.gram, 1.0, cons.test, pilot_m, np.random.default_rng(rng))
    delta = cons.test_mmd2 - cons.epsilon_m
    z = norm.ppf(1 - alpha) + norm.ppf(target_power)
    return max(8, int(math.ceil((z * report.mmd_sigma_hat / delta) ** 2)))


def run_power_cell(cons, m, reps, alpha, seed_keys, master_seed, threads=1, variance="delta"):
    """Paired NAMMD/MMD closeness tests on draws from the test pair of ``cons``.

    Returns one row per repetition: (NAMMD rejects, MMD rejects, NAMMD-hat, MMD^2-hat).
    """
    K = 1.0

    def rep(r):
        report = _indexed_report(cons.gram, K, cons.test, m, rng_for(master_seed, *seed_keys, r))
        a = nammd_dct_from_report(report, cons.epsilon_n, alpha, variance=variance)
        b = mmd_dct_from_report(report, cons.epsilon_m, alpha)
        return a.reject, b.reject, a.statistic, b.statistic

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            res = list(ex.map(rep, range(reps)))
    else:
        res = [rep(r) for r in range(reps)]
    return np.array(res)


def _power_dct(cfg):
    spec = _spec(cfg, default=1.0)
    if spec.K != 1.0:
        raise ConfigError("power_dct assumes K = 1")
    factors = list(cfg.params.get("m_factors", [0.5, 0.75, 1.0, 1.5, 2.0]))
    target = float(cfg.params.get("target_power", 0.75))
    rows = []
    cell = 0
    for ei, eps in enumerate(cfg.epsilons):
        try:
            cons = closeness_construction(eps, spec, rng=rng_for(cfg.master_seed, _CONSTRUCTION_KEY + ei))
        except RECOVERABLE as exc:
            rows.append(_error_row(cfg, cell, "construction", "nammd_dct", exc, epsilon=eps))
            cell += 1
            continue
        if cfg.sample_sizes:
            grid = list(cfg.sample_sizes)
        else:
            m_star = calibrate_sample_size(
                cons, cfg.alpha, target, rng=rng_for(cfg.master_seed, _CONSTRUCTION_KEY + ei, 1)
            )
            grid = [max(8, int(round(f * m_star))) for f in factors]
        setting = f"norm_ref={cons.reference_norm_sum:.6f};norm_test={cons.test_norm_sum:.6f}"
        for m in grid:
            t0 = time.perf_counter()
            res = run_power_cell(cons, m, cfg.repetitions, cfg.alpha, (cell,), cfg.master_seed,
                                 cfg.threads, _variance(cfg))
            wall = time.perf_counter() - t0 if cfg.include_timing else None
            rn, rm = res[:, 0], res[:, 1]
            rows.append(_rate_row(cfg, cell, setting, "nammd_dct", m, cons.epsilon_n, rn, res[:, 2],
                                  value=cons.test_nammd, wall_clock_s=wall))
            rows.append(_rate_row(cfg, cell, setting, "mmd_dct", m, cons.epsilon_m, rm, res[:, 3],
                                  value=cons.test_mmd2, wall_clock_s=wall))
            rows.append(_rate_row(cfg, cell, setting, "mmd_only", m, cons.epsilon_n,
                                  (rm > 0) & (rn == 0), wall_clock_s=wall))
            cell += 1
    return rows


def _reference_kernel(cfg, support, pair, rng):
    """Fixed bandwidth if configured, else one selected on a draw from the reference pair."""
    if cfg.bandwidth is not None:
        return KernelSpec(cfg.kernel, float(cfg.bandwidth))
    ix, iy = draw_indices(pair, int(cfg.params.get("train_size", 200)), rng)
    iters = int(cfg.params.get("selection_iterations", 300))
    return select_kernel(support[ix], support[iy], cfg.kernel, OptimizerConfig(iterations=iters)).spec


def _closeness_sweep(cfg):
    n = int(cfg.params.get("n", 50))
    gap = float(cfg.params.get("gap", 0.2))
    d = int(cfg.params.get("dimension", 2))
    rows = []
    cell = 0
    for ei, eps in enumerate(cfg.epsilons):
        crng = rng_for(cfg.master_seed, _CONSTRUCTION_KEY + ei)
        support = crng.normal(size=(n, d))
        try:
            null_pair = uniform_with_tv(support, eps, crng)
            alt_pair = uniform_with_tv(support, eps + gap, crng)
        except RECOVERABLE as exc:
            rows.append(_error_row(cfg, cell, "construction", "canonne_dct", exc, epsilon=eps))
            cell += 1
            continue
        spec = _reference_kernel(cfg, support, null_pair, crng)
        G = kernel_matrix(spec, support, support)
        eps_n = exact_discrete_nammd(null_pair, G, spec.K)
        for m in cfg.sample_sizes:
            t0 = time.perf_counter()
            ci = cell

            def rep(r):
                out = []
                for h, pair in enumerate((null_pair, alt_pair)):
                    rng = rng_for(cfg.master_seed, ci, r, h)
                    c = canonne_dct(null_pair, pair, m, cfg.alpha, max(cfg.B, 100), rng=rng)
                    report = _indexed_report(G, spec.K, pair, m, rng)
                    a = nammd_dct_from_report(report, eps_n, cfg.alpha, variance=_variance(cfg))
                    out.append((c, a))
                return out

            res = _map(cfg, rep, cfg.repetitions)
            wall = time.perf_counter() - t0 if cfg.include_timing else None
            for h, hyp in enumerate(("null", "alternative")):
                for j, meth in enumerate(("canonne_dct", "nammd_dct")):
                    outs = [x[h][j] for x in res]
                    rows.append(_rate_row(
                        cfg, ci, f"{hyp};gap={gap if h else 0.0}", meth, m, eps,
                        [o.reject for o in outs], [o.statistic for o in outs], [o.p_value for o in outs],
                        value=eps_n if meth == "nammd_dct" else eps, wall_clock_s=wall,
                    ))
            cell += 1
    return rows


# ---------------------------------------------------------------------------
# closed-form sweeps and oracle checks


def _figure1(cfg):
    variances = list(cfg.params.get("variances", np.round(np.linspace(0.1, 2.0, 20), 4).tolist()))
    target = float(cfg.params.get("target_mmd2", 0.15))
    gamma = float(cfg.bandwidth) if cfg.bandwidth is not None else UNIT_EXPONENT_BANDWIDTH
    rows = []
    for ci, v in enumerate(variances):
        setting = f"variance={v}"
        try:
            gap = constant_mmd_gaussian_sweep(v, target, gamma)
        except RECOVERABLE as exc:
            rows.append(_error_row(cfg, ci, setting, "gap", exc))
            continue
        npp, nqq, cross, mmd2 = gaussian_moment_oracle(v, v, gap, gamma)
        values = {"gap": gap, "mmd2": mmd2, "norm_sum": npp + nqq, "nammd": mmd2 / (4 - npp - nqq)}
        for meth, val in values.items():
            rows.append(ResultRow(cfg.kind, ci, setting, meth, value=float(val), reference=target if meth == "mmd2" else None))
    return rows


ORACLE_SETTINGS = {
    "var_0.01_vs_1": (0.01, 1.0),
    "var_1.1_vs_1.6": (1.1, 1.6),
    "var_0.5_vs_1": (0.5, 1.0),
}


def oracle_statistics(X, Y, spec):
    """U-statistic estimates of the embedding terms, MMD^2, NAMMD and sigma_M^2."""
    s = summarize_samples(spec, X, Y)
    m = s.m
    d = m * (m - 1)
    z1, z2 = variance_components(s)
    npp, nqq, cross = s.sxx / d, s.syy / d, (s.sxy - s.trace_xy) / d
    mmd2 = npp + nqq - 2 * cross
    return {
        "norm_p": npp,
        "norm_q": nqq,
        "cross": cross,
        "mmd2": mmd2,
        "nammd": mmd2 / (4 * s.K - npp - nqq),
        "sigma2_m": mmd_variance(z1, z2, m),
    }


def _oracle_check(cfg):
    gamma = UNIT_EXPONENT_BANDWIDTH
    spec = KernelSpec.gaussian(gamma)
    names = cfg.params.get("settings", list(ORACLE_SETTINGS))
    rows = []
    cell = 0
    for name in names:
        if name not in ORACLE_SETTINGS:
            raise ConfigError(f"unknown oracle setting {name!r}")
        vp, vq = ORACLE_SETTINGS[name]
        npp, nqq, cross, mmd2 = gaussian_moment_oracle(vp, vq, 0.0, gamma)
        ref = {"norm_p": npp, "norm_q": nqq, "cross": cross, "mmd2": mmd2,
               "nammd": mmd2 / (4 - npp - nqq), "sigma2_m": None}
        for m in cfg.sample_sizes:
            ci = cell

            def rep(r):
                rng = rng_for(cfg.master_seed, ci, r)
                X = rng.normal(0.0, math.sqrt(vp), size=(m, 1))
                Y = rng.normal(0.0, math.sqrt(vq), size=(m, 1))
                return oracle_statistics(X, Y, spec)

            t0 = time.perf_counter()
            res = _map(cfg, rep, cfg.repetitions)
            wall = time.perf_counter() - t0 if cfg.include_timing else None
            for q in ref:
                vals = np.array([x[q] for x in res])
                rows.append(ResultRow(
                    cfg.kind, ci, name, q, m=m, repetitions=len(vals),
                    statistic_mean=float(vals.mean()), statistic_std=float(vals.std()),
                    value=float(vals.mean()), reference=ref[q], wall_clock_s=wall,
                ))
            cell += 1
    return rows


RUNNERS = {
    "type1_tst": lambda cfg: _tst(cfg, null=True),
    "power_tst": lambda cfg: _tst(cfg, null=False),
    "type1_dct": _type1_dct,
    "power_dct": _power_dct,
    "closeness_sweep": _closeness_sweep,
    "figure1_sweep": _figure1,
    "oracle_check": _oracle_check,
}


def run_experiment(cfg: ExperimentConfig):
    """Run one configured experiment; write the rows to ``cfg.out`` when set."""
    cfg.validate()
    rows = RUNNERS[cfg.kind](cfg)
    if cfg.out:
        emit_results(rows, cfg.out, cfg.format)
    return rows
