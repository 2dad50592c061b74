"""Oracle suite: reruns the reference examples and compares with closed forms.

Each check returns a :class:`Check` with the measured values, the targets,
the tolerance rule and a pass flag. With fewer than :data:`MIN_RUNS`
repetitions the statistical checks are reported as inconclusive instead of
failing, and their standard errors are flagged as wide.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import synthetic as sy
from .causality import ErrorCache, conditioned_gc, gc_significance, pairwise_gc, set_gc
from .data import TimeSeriesSet, standardize
from .network import best_cut, dendrogram
from .partition import best_partition_exhaustive, total_gc
from .regression import ModelSpec
from .synergy import _psi_from_cache, cumulant_table, psi_matrix, psi_pair, split_psi

MIN_RUNS = 20

LINEAR = ModelSpec()
POLY2 = ModelSpec(kernel="polynomial", degree=2)

# reference constants; ``run_suite(overrides=...)`` can replace any of them
TARGETS = {
    "linear_psi": sy.oracle_psi_linear(0.3, 0.32),
    "product_psi": sy.oracle_psi_product(0.3, 0.32),
    "product_sign_fraction": 0.95,
    "triplet_12_3": 0.88,
    "triplet_1_2_3": 0.18,
    "triplet_13_2": 0.18,
    "triplet_tol_12_3": 0.05,
    "triplet_tol_small": 0.03,
    "hidden_source_conditioned_ratio": 0.25,
    "hidden_source_pairwise_ratio": 0.75,
    "suppressor_nonsig_fraction": 0.90,
    "additivity_psi": 0.0,
    "identity_atol": 1e-10,
    "fpr_low": 0.03,
    "fpr_high": 0.07,
    "network_fraction": 0.90,
    "network_modularity": 0.2,
}


@dataclass
class Check:
    name: str
    passed: bool | None
    measured: dict
    target: dict
    tolerance: str
    seconds: float = 0.0
    inconclusive: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Report:
    checks: list = field(default_factory=list)
    seed: int = 0
    runs: int = 100

    @property
    def passed(self) -> bool:
        # inconclusive checks do not fail the report
        return all(c.passed is not False for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "runs": self.runs,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    se = v.std(ddof=1) / math.sqrt(len(v)) if len(v) > 1 else math.inf
    return float(v.mean()), float(se)


def _within_se(mean, se, target, k=3.0) -> bool:
    return abs(mean - target) < k * se


def _seeds(seed, runs):
    return [seed + r for r in range(runs)]


class _Context:
    def __init__(self, seed, runs, targets):
        self.seed, self.runs, self.t = seed, runs, targets
        self.small = runs < MIN_RUNS

    def statistical(self, ok: bool):
        return None if self.small else bool(ok)


# --- individual checks ------------------------------------------------------


def check_linear_target(ctx: _Context, T: int = 10_000) -> Check:
    """Redundancy of the coupled pair for the linear target."""
    a, b, A = 0.4, 0.3, 0.3
    psis = []
    for s in _seeds(ctx.seed, ctx.runs):
        ts = standardize(sy.append_linear_target(sy.gen_coupled_ar(a, b, T, s), A))
        psis.append(psi_pair(ts, "z", "x", "y", LINEAR).psi)
    mean, se = _mean_se(psis)
    target = ctx.t["linear_psi"]
    return Check(
        "linear_target",
        ctx.statistical(_within_se(mean, se, target)),
        {"mean_psi": mean, "se": se, "population_psi_with_target_past": sy.exact_psi_linear(a, b, A)},
        {"psi": target},
        "|mean - target| < 3 SE",
        inconclusive=ctx.small,
    )


def check_product_target(ctx: _Context, T: int = 10_000) -> Check:
    """Synergy of the coupled pair for the product target."""
    B = 0.3
    psis = []
    for s in _seeds(ctx.seed, ctx.runs):
        ts = standardize(sy.append_product_target(sy.gen_coupled_ar(0.4, 0.3, T, s), B))
        psis.append(psi_pair(ts, "w", "x", "y", POLY2).psi)
    mean, se = _mean_se(psis)
    neg = float(np.mean(np.asarray(psis) < 0))
    target = ctx.t["product_psi"]
    mean_ok = _within_se(mean, se, target)
    sign_ok = neg >= ctx.t["product_sign_fraction"]
    return Check(
        "product_target",
        ctx.statistical(mean_ok and sign_ok),
        {"mean_psi": mean, "se": se, "negative_fraction": neg, "mean_ok": mean_ok, "sign_ok": sign_ok},
        {"psi": target, "negative_fraction": ctx.t["product_sign_fraction"]},
        "|mean - target| < 3 SE and sign negative in the required fraction of runs",
        inconclusive=ctx.small,
    )


TRIPLET_PARTITIONS = {
    "12_3": [[0, 1], [2]],
    "1_2_3": [[0], [1], [2]],
    "13_2": [[0, 2], [1]],
}


def check_triplet(ctx: _Context, T: int = 1000) -> Check:
    """Total causality of three partitions of the redundant triplet."""
    vals = {k: [] for k in TRIPLET_PARTITIONS}
    wins = 0
    for s in _seeds(ctx.seed, ctx.runs):
        ts = standardize(sy.gen_redundant_triplet(T, s))
        cache = ErrorCache(ts, "w", LINEAR)
        for k, blocks in TRIPLET_PARTITIONS.items():
            vals[k].append(total_gc(ts, "w", blocks, LINEAR, cache=cache))
        wins += best_partition_exhaustive(ts, "w", LINEAR, cache=cache).blocks == ((0, 1), (2,))
    means = {k: float(np.mean(v)) for k, v in vals.items()}
    t = ctx.t
    ok_values = (
        abs(means["12_3"] - t["triplet_12_3"]) <= t["triplet_tol_12_3"]
        and abs(means["1_2_3"] - t["triplet_1_2_3"]) <= t["triplet_tol_small"]
        and abs(means["13_2"] - t["triplet_13_2"]) <= t["triplet_tol_small"]
    )
    win_fraction = wins / ctx.runs
    # a single run decides between two partitions that differ only by noise,
    # so the search must pick {12}{3} in a majority of runs
    ok_search = win_fraction > 0.5
    return Check(
        "triplet_partition",
        ctx.statistical(ok_values and ok_search),
        {**{f"delta_{k}": v for k, v in means.items()}, "exhaustive_12_3_fraction": win_fraction},
        {"delta_12_3": t["triplet_12_3"], "delta_1_2_3": t["triplet_1_2_3"], "delta_13_2": t["triplet_13_2"]},
        "values within +-0.05 / +-0.03 / +-0.03; exhaustive search returns {12}{3} in most runs",
        inconclusive=ctx.small,
    )


def check_hidden_source(ctx: _Context, T: int = 1000, s: float = 0.5) -> Check:
    """Conditioned GC vanishes with the number of redundant drivers; pairwise GC does not."""
    med = {}
    for n in range(2, 11):
        cg, pg = [], []
        for seed in _seeds(ctx.seed, ctx.runs):
            ts = standardize(sy.gen_hidden_source(n, s, T, seed))
            cg.append(conditioned_gc(ts, "w", 0, LINEAR).value)
            pg.append(pairwise_gc(ts, "w", 0, LINEAR).value)
        med[n] = (float(np.median(cg)), float(np.median(pg)))
    rc = med[10][0] / med[2][0]
    rp = med[10][1] / med[2][1]
    ok = rc < ctx.t["hidden_source_conditioned_ratio"] and rp > ctx.t["hidden_source_pairwise_ratio"]
    return Check(
        "hidden_source",
        ctx.statistical(ok),
        {"conditioned_ratio": rc, "pairwise_ratio": rp, "medians": {str(k): v for k, v in med.items()}},
        {"conditioned_ratio_below": ctx.t["hidden_source_conditioned_ratio"], "pairwise_ratio_above": ctx.t["hidden_source_pairwise_ratio"]},
        "median ratios n=10 vs n=2",
        inconclusive=ctx.small,
    )


SUPPRESSOR_RHOS = (0.0, 0.25, 0.5, 0.75, 1.0)


def check_suppressor(ctx: _Context, T: int = 1000, method: str = "robust") -> Check:
    """Nonlinear conditioned GC detects the suppressed driver; pairwise GC misses it."""
    medians, cond_sig, pair_nonsig, pair_nonsig_f = [], [], [], []
    for rho in SUPPRESSOR_RHOS:
        vals, cs, pn, pnf = [], [], [], []
        for s in _seeds(ctx.seed, ctx.runs):
            ts = standardize(sy.gen_suppressor(rho, T, s))
            v = conditioned_gc(ts, 3, 2, POLY2)
            vals.append(v.value)
            cs.append(gc_significance(v, ts, method) < 0.05)
            pv = pairwise_gc(ts, 3, 2, POLY2)
            pn.append(gc_significance(pv, ts, method) >= 0.05)
            pnf.append(gc_significance(pv, ts, "analytic") >= 0.05)
        medians.append(float(np.median(vals)))
        cond_sig.append(float(np.mean(cs)))
        pair_nonsig.append(float(np.mean(pn)))
        pair_nonsig_f.append(float(np.mean(pnf)))
    monotone = all(b > a for a, b in zip(medians, medians[1:]))
    significant = all(f >= 0.5 for rho, f in zip(SUPPRESSOR_RHOS, cond_sig) if rho >= 0.5)
    # median p < 0.05 is the same as significance in at least half the runs
    pairwise_ok = all(f >= ctx.t["suppressor_nonsig_fraction"] for f in pair_nonsig)
    return Check(
        "suppressor",
        ctx.statistical(monotone and significant and pairwise_ok),
        {
            "rho": list(SUPPRESSOR_RHOS),
            "median_conditioned_gc": medians,
            "conditioned_significant_fraction": cond_sig,
            "pairwise_nonsignificant_fraction": pair_nonsig,
            "pairwise_nonsignificant_fraction_f_test": pair_nonsig_f,
            "monotone": monotone,
        },
        {"pairwise_nonsignificant_fraction": ctx.t["suppressor_nonsig_fraction"]},
        f"medians increasing; median p < 0.05 at rho >= 0.5; pairwise non-significant ({method} test) in the required fraction at every rho",
        inconclusive=ctx.small,
    )


def check_additivity(ctx: _Context, T: int = 10_000) -> Check:
    """Independent AR(1) drivers acting additively give zero psi on average."""
    a, A = 0.4, 0.3
    psis = []
    for s in _seeds(ctx.seed, ctx.runs):
        ts = standardize(sy.append_linear_target(sy.gen_coupled_ar(a, 0.0, T, s), A))
        psis.append(psi_pair(ts, "z", "x", "y", LINEAR).psi)
    mean, se = _mean_se(psis)
    target = ctx.t["additivity_psi"]
    return Check(
        "additivity_null",
        ctx.statistical(_within_se(mean, se, target)),
        {"mean_psi": mean, "se": se, "z": (mean - target) / se, "population_psi_with_target_past": sy.exact_psi_linear(a, 0.0, A)},
        {"psi": target},
        "|mean - target| < 3 SE",
        inconclusive=ctx.small,
    )


def check_identities(ctx: _Context, n_datasets: int = 50, T: int = 300) -> Check:
    """Exact algebraic identities (not statistical)."""
    atol = ctx.t["identity_atol"]
    rng = np.random.default_rng(ctx.seed)
    worst_form = 0.0
    worst_mobius = 0.0
    singleton_identical = True
    for k in range(n_datasets):
        X = rng.standard_normal((T, 4))
        X[1:, 3] += 0.5 * X[:-1, 0] * X[:-1, 1] + 0.3 * X[:-1, 2]
        ts = standardize(TimeSeriesSet(X))
        spec = POLY2 if k % 2 else LINEAR
        cache = ErrorCache(ts, 3, spec)
        for i, j in itertools.combinations(range(3), 2):
            e = cache.epsilon({0, 1, 2})
            e_i, e_j = cache.epsilon({0, 1, 2} - {i}), cache.epsilon({0, 1, 2} - {j})
            e_ij = cache.epsilon({0, 1, 2} - {i, j})
            first = (e_ij - e_j) - (e_i - e)
            worst_form = max(worst_form, abs(first - _psi_from_cache(cache, i, j)))
        worst_mobius = max(worst_mobius, cumulant_table(ts, 3, spec).expansion_error())
        for b in range(3):
            a1 = set_gc(ts, 3, (b,), spec, cache=cache)
            a2 = conditioned_gc(ts, 3, b, spec, cache=cache)
            singleton_identical &= a1.value == a2.value
    ts = standardize(sy.gen_network(600, ctx.seed))
    res = psi_matrix(ts, 3, ModelSpec(regularization="ridge-gcv"))
    sym = float(np.max(np.abs(res.psi - res.psi.T)))
    r, s_, _, _ = split_psi(res.psi)
    recon = float(np.max(np.abs(r - s_ - res.psi)))
    overlap = float(np.max(r * s_))
    ok = worst_form <= atol and worst_mobius <= atol and singleton_identical and sym == 0.0 and recon == 0.0 and overlap == 0.0
    return Check(
        "algebraic_identities",
        bool(ok),
        {
            "psi_two_form_max_diff": worst_form,
            "mobius_max_diff": worst_mobius,
            "singleton_bit_identical": singleton_identical,
            "psi_asymmetry": sym,
            "split_reconstruction_error": recon,
            "split_overlap": overlap,
        },
        {"atol": atol},
        "form and Moebius differences <= atol; symmetry, split and singleton identity exact",
    )


def check_calibration(ctx: _Context, T: int = 2000, m: int = 2) -> Check:
    """F-test false positives on independent noise."""
    n_null = 10 * ctx.runs
    spec = ModelSpec(m=m)
    rejections = 0
    for k in range(n_null):
        X = np.column_stack([sy.gaussian(ctx.seed + k, stream, T) for stream in range(3)])
        ts = standardize(TimeSeriesSet(X))
        v = conditioned_gc(ts, 0, 1, spec)
        rejections += gc_significance(v, ts, "analytic") < 0.05
    rate = rejections / n_null
    lo, hi = ctx.t["fpr_low"], ctx.t["fpr_high"]
    return Check(
        "f_test_calibration",
        ctx.statistical(lo <= rate <= hi),
        {"false_positive_rate": rate, "null_runs": n_null},
        {"low": lo, "high": hi},
        "rate within [low, high] at nominal 0.05",
        inconclusive=ctx.small,
    )


def check_network(ctx: _Context, T: int = 1000) -> Check:
    """Planted pairs dominate the synergy matrix; the redundancy network is modular."""
    spec = ModelSpec(kernel="polynomial", degree=2, regularization="ridge-gcv")
    n_seeds = max(1, ctx.runs // 5)
    hits, qs = 0, []
    for s in _seeds(ctx.seed, n_seeds):
        ts = standardize(sy.gen_network(T, s))
        res = psi_matrix(ts, 0.95, spec)
        L = ts.labels
        iu = np.triu_indices(ts.n, 1)
        order = np.argsort(-res.psi[iu], kind="stable")
        pairs = [frozenset((L[iu[0][k]], L[iu[1][k]])) for k in order]
        planted = {frozenset(p) for p in ts.meta["redundant_pairs"]}
        hits += set(pairs[:2]) == planted and pairs[-1] == frozenset(ts.meta["synergetic_pair"])
        qs.append(best_cut(dendrogram(res.psi_r, L), res.psi_r).modularity)
    frac = hits / n_seeds
    ok = frac >= ctx.t["network_fraction"] and min(qs) > ctx.t["network_modularity"]
    return Check(
        "network_structure",
        ctx.statistical(ok) if n_seeds >= 5 else None,
        {"rank_check_fraction": frac, "min_modularity": float(min(qs)), "median_modularity": float(np.median(qs)), "seeds": n_seeds},
        {"fraction": ctx.t["network_fraction"], "modularity_above": ctx.t["network_modularity"]},
        "top-2 positive entries are the planted pairs and the most negative is the synergetic pair; Q > threshold in every seed",
        inconclusive=n_seeds < 5,
    )


CHECKS = {
    "linear_target": check_linear_target,
    "product_target": check_product_target,
    "triplet": check_triplet,
    "hidden_source": check_hidden_source,
    "suppressor": check_suppressor,
    "additivity": check_additivity,
    "identities": check_identities,
    "calibration": check_calibration,
    "network": check_network,
}


def run_check(name: str, seed: int = 0, runs: int = 100, overrides=None, **kw) -> Check:
    ctx = _Context(seed, runs, {**TARGETS, **(overrides or {})})
    t0 = time.perf_counter()
    check = CHECKS[name](ctx, **kw)
    check.seconds = time.perf_counter() - t0
    if ctx.small and check.inconclusive:
        check.note = f"only {runs} runs: standard errors are wide, statistical verdict withheld"
    return check


def run_suite(seed: int = 0, runs: int = 100, only=None, overrides=None) -> Report:
    """Run the oracle checks (all of them unless ``only`` names a subset)."""
    unknown = set(overrides or {}) - set(TARGETS)
    if unknown:
        raise KeyError(f"unknown oracle constants: {sorted(unknown)}")
    names = list(CHECKS) if only is None else list(only)
    report = Report(seed=seed, runs=runs)
    for name in names:
        report.checks.append(run_check(name, seed, runs, overrides))
    return report
