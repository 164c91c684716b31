"""Property and simulation suites with measured values and pass/fail flags.

Each suite returns a plain dict: ``suite``, ``passed``, ``measured`` and the
``threshold`` it was judged against, so the CLI can emit it as JSON.
"""
from __future__ import annotations

import math
import time
from fractions import Fraction
from typing import Callable

import numpy as np

from . import estimation as est
from .impossibility import build_counterexample, verify_counterexample
from .inference import DegenerateVarianceError, pivotality_check, simultaneous_region, tau_confidence_interval, test_statistic
from .population import (
    CO,
    NT,
    PotentialTable,
    natural_receipt,
    realized_outcome,
    subgroup_sums,
    mixture_rhs,
    true_estimands,
)
from .randomization import Design, exact_expectation, monte_carlo, realize, replicate_rng, sample_assignment
from .simulate import GeneratorParams, constant_effect_template, one_sided_template, random_population, tile

__all__ = ["SUITES", "run_suite"]


def _spawn(seed: int, stream: int) -> np.random.Generator:
    return replicate_rng(seed, stream)


def _random_pops(n: int, seed: int, *, max_J: int, max_n: int, probs: dict, mode: str, require: tuple,
                 fixed_J: int | None = None, need: Callable[[PotentialTable], bool] | None = None):
    rng = _spawn(seed, 0)
    made = 0
    while made < n:
        J = fixed_J or int(rng.integers(1, max_J + 1))
        params = GeneratorParams(n_clusters=J, min_size=1, max_size=max_n, type_probs=probs,
                                 outcome_mode=mode, require=require)
        pop = random_population(params, rng)
        if need is None or need(pop):
            made += 1
            yield pop


def mixture(n_pops: int = 1000, seed: int = 0, one_sided: bool = False) -> dict:
    """Wald ratio equals the complier/always-taker/never-taker mixture."""
    t0 = time.perf_counter()
    if one_sided:
        probs, require = {"complier": 0.55, "never_taker": 0.45}, ("A2", "A4.1")
    else:
        probs, require = {"complier": 0.45, "always_taker": 0.25, "never_taker": 0.30}, ("A2", "A4")
    max_err, n_with_at, at_sum_nonzero = 0.0, 0, 0
    for pop in _random_pops(n_pops, seed, max_J=8, max_n=6, probs=probs, mode="real", require=require):
        rep = true_estimands(pop)
        max_err = max(max_err, abs(rep.tau - mixture_rhs(pop)))
        n_with_at += rep.N_AT > 0
        at_sum_nonzero += rep.pe_at_sum != 0.0
    passed = max_err < 1e-12 and (at_sum_nonzero == 0 if one_sided else n_with_at > 0)
    return {
        "suite": "one_sided_mixture" if one_sided else "mixture",
        "passed": bool(passed),
        "threshold": {"max_abs_error": 1e-12},
        "measured": {
            "populations": n_pops,
            "max_abs_error": max_err,
            "populations_with_always_takers": n_with_at,
            "nonzero_always_taker_sums": at_sum_nonzero,
            "seconds": time.perf_counter() - t0,
        },
    }


def one_sided_mixture(n_pops: int = 1000, seed: int = 0) -> dict:
    return mixture(n_pops, seed, one_sided=True)


def unbiasedness(n_pops: int = 200, seed: int = 0, J: int = 6, m: int = 3) -> dict:
    """Exact enumeration of the ITT and complier-count estimators' expectations."""
    t0 = time.perf_counter()
    design = Design(J, m)
    stats = {
        "tau_Y_hat": lambda t: est.point_estimates(t, design).tau_Y_hat,
        "tau_D_hat": lambda t: est.point_estimates(t, design).tau_D_hat,
        "N_CO_hat": lambda t: est.point_estimates(t, design).N_CO_hat,
    }
    worst = {k: 0.0 for k in stats}
    probs = {"complier": 0.5, "always_taker": 0.2, "never_taker": 0.3}
    for pop in _random_pops(n_pops, seed, max_J=J, max_n=4, probs=probs, mode="real",
                            require=("A2", "A4"), fixed_J=J):
        rep = true_estimands(pop)
        truth = {"tau_Y_hat": rep.tau_Y, "tau_D_hat": rep.tau_D, "N_CO_hat": float(rep.N_CO)}
        for k, f in stats.items():
            worst[k] = max(worst[k], abs(exact_expectation(pop, design, f) - truth[k]))
    return {
        "suite": "unbiasedness",
        "passed": all(v < 1e-12 for v in worst.values()),
        "threshold": {"max_abs_error": 1e-12},
        "measured": {"populations": n_pops, "J": J, "m": m, "max_abs_error": worst,
                     "seconds": time.perf_counter() - t0},
    }


IMPOSSIBILITY_CASES = ((Design(2, 1), (2, 2)), (Design(4, 2), (4, 3, 2, 2)))


def impossibility(seed: int = 0) -> dict:
    verdicts = []
    for design, sizes in IMPOSSIBILITY_CASES:
        for target in ("te_co", "pe_at", "pe_nt"):
            pair = build_counterexample(target, sizes, seed=seed)
            v = verify_counterexample(pair, design)
            verdicts.append({"J": design.J, "m": design.m, **v.as_dict()})
    passed = all(v["confirmed"] and v["gap"] == 1.0 for v in verdicts)
    return {"suite": "impossibility", "passed": passed,
            "verdict": "counterexample confirmed" if passed else "counterexample not confirmed",
            "threshold": {"gap": 1.0, "distribution_equality": "exact"},
            "measured": {"cases": verdicts}}


def _has_co_and_nt(pop: PotentialTable) -> bool:
    return pop.count(CO) > 0 and pop.count(NT) > 0


def _exact_truth(pop: PotentialTable) -> tuple[Fraction, Fraction, Fraction, int, int]:
    """(tau, x, y, N_CO, N_NT) in rational arithmetic, from realized outcomes."""
    dy = dd = Fraction(0)
    for j, c in enumerate(pop.clusters):
        d0, d1 = natural_receipt(pop, j, 0), natural_receipt(pop, j, 1)
        for i in range(c.size):
            dy += Fraction(realized_outcome(pop, j, i, 1)) - Fraction(realized_outcome(pop, j, i, 0))
            dd += d1[i] - d0[i]
    sums = subgroup_sums(pop)
    n_co, n_nt = pop.count(CO), pop.count(NT)
    return dy / dd, Fraction(sums["pe_nt_sum"]) / n_nt, Fraction(sums["te_co_sum"]) / n_co, n_co, n_nt


def _exact_binary_bounds(tau: Fraction, n_co: int, n_nt: int) -> tuple[Fraction, ...]:
    r = Fraction(n_nt, n_co)
    return max(Fraction(0), tau - r), min(Fraction(1), tau), max(Fraction(0), (tau - 1) / r), min(Fraction(1), tau / r)


def linear_identity(n_pops: int = 1000, seed: int = 0) -> dict:
    """Complier total effect as a line in never-taker spillover; containment in bounds.

    Containment is judged in exact rational arithmetic, since tight bounds
    are attained exactly; the floating-point bounds are checked against the
    exact ones separately.
    """
    max_err, max_bound_err, inside, checked = 0.0, 0.0, 0, 0
    probs = {"complier": 0.6, "never_taker": 0.4}
    for pop in _random_pops(n_pops, seed, max_J=8, max_n=6, probs=probs, mode="binary",
                            require=("A2", "A4.1", "A6"), need=_has_co_and_nt):
        if not pop.nonneg_effects_holds():
            continue
        rep = true_estimands(pop)
        x, y = rep.pe_nt_avg, rep.te_co_avg
        max_err = max(max_err, abs(y - (rep.tau - rep.N_NT / rep.N_CO * x)))
        tau_q, x_q, y_q, n_co, n_nt = _exact_truth(pop)
        te_lo, te_hi, pe_lo, pe_hi = _exact_binary_bounds(tau_q, n_co, n_nt)
        inside += (te_lo <= y_q <= te_hi) and (pe_lo <= x_q <= pe_hi)
        b = est.bounds_binary(rep.tau, rep.N_CO, rep.N_NT)
        for got, want in zip((b.te_lower, b.te_upper, b.pe_lower, b.pe_upper), (te_lo, te_hi, pe_lo, pe_hi)):
            max_bound_err = max(max_bound_err, abs(got - float(want)))
        checked += 1
    return {
        "suite": "identity",
        "passed": max_err < 1e-12 and max_bound_err < 1e-12 and inside == checked == n_pops,
        "threshold": {"max_abs_error": 1e-12, "containment": 1.0},
        "measured": {"populations": checked, "max_abs_error": max_err,
                     "max_float_bound_error": max_bound_err,
                     "containment": inside / checked if checked else math.nan},
    }


ENDPOINTS = ("te_lower", "te_upper", "pe_lower", "pe_upper")


def consistency(Js=(20, 80, 320), reps: int = 500, seed: int = 0) -> dict:
    """Median absolute error of the plug-in bound endpoints as J grows.

    ``passed`` requires, for every endpoint, a nonincreasing median error and
    a last median below half the first. Binary bounds always have at least
    two endpoints on a clip (0 or 1) whose estimates hit the truth exactly,
    so their median error is 0 at every J and the halving cannot hold; the
    report flags them as ``clipped`` and gives the verdict on the rest.
    """
    t0 = time.perf_counter()
    base = one_sided_template()
    rep = true_estimands(base)
    truth = est.bounds_binary(rep.tau, rep.N_CO, rep.N_NT)
    medians = {}
    for J in Js:
        pop, design = tile(base, J), Design(J, J // 2)
        errs = {k: [] for k in ENDPOINTS}
        for r in range(reps):
            trial = realize(pop, sample_assignment(design, replicate_rng(seed + J, r)))
            pe = est.point_estimates(trial, design)
            b = est.bounds_binary(pe.tau_hat, pe.N_CO_hat, pe.N_NT_hat)
            for k in ENDPOINTS:
                errs[k].append(abs(getattr(b, k) - getattr(truth, k)))
        medians[J] = {k: float(np.median(v)) for k, v in errs.items()}
    nonincreasing = {k: all(medians[a][k] >= medians[b][k] for a, b in zip(Js, Js[1:])) for k in ENDPOINTS}
    first, last = medians[Js[0]], medians[Js[-1]]
    halved = {k: last[k] < 0.5 * first[k] for k in ENDPOINTS}
    clipped = [k for k in ENDPOINTS if all(medians[J][k] == 0.0 for J in Js)]
    unclipped_ok = all(nonincreasing[k] and halved[k] for k in ENDPOINTS if k not in clipped)
    return {
        "suite": "consistency",
        "passed": all(nonincreasing.values()) and all(halved.values()),
        "threshold": {"nonincreasing": True, "last_below_half_first": True},
        "measured": {"truth": {k: getattr(truth, k) for k in ENDPOINTS},
                     "median_abs_error": {str(J): v for J, v in medians.items()},
                     "nonincreasing": nonincreasing, "halved": halved,
                     "clipped": clipped, "unclipped_passed": unclipped_ok,
                     "seconds": time.perf_counter() - t0},
    }


def pivotality(J: int = 200, reps: int = 2000, seed: int = 0, alpha: float = 0.05) -> dict:
    base = constant_effect_template()
    rep = true_estimands(base)
    diag = pivotality_check(tile(base, J), Design(J, J // 2), rep.pe_nt_avg, rep.te_co_avg, reps, seed, alpha)
    passed = diag.ks_distance < 0.05 and 0.03 <= diag.rejection_rate <= 0.07
    return {
        "suite": "pivotality",
        "passed": bool(passed),
        "threshold": {"ks_distance": 0.05, "rejection_rate": [0.03, 0.07]},
        "measured": {"J": J, "replications": reps, "ks_distance": diag.ks_distance,
                     "rejection_rate": diag.rejection_rate, "undefined": diag.n_undefined},
    }


def coverage(J: int = 50, reps: int = 1000, seed: int = 0, alpha: float = 0.05, template: str = "heterogeneous") -> dict:
    base = one_sided_template() if template == "heterogeneous" else constant_effect_template()
    pop, design = tile(base, J), Design(J, J // 2)
    truth = true_estimands(pop)
    x, y = truth.pe_nt_avg, truth.te_co_avg

    def covered(trial) -> float:
        region = simultaneous_region(trial, design, alpha, grid_resolution=0)
        return float(region.contains(x, y))

    hits = monte_carlo(pop, design, covered, reps, seed)
    rate = float(hits.mean())
    return {
        "suite": "coverage",
        "passed": rate >= 0.93,
        "threshold": {"coverage": 0.93},
        "measured": {"J": J, "replications": reps, "template": template, "coverage": rate,
                     "truth": {"x": x, "y": y, "tau": truth.tau}},
    }


def _grid_membership(trial, design, tau0: float, z: float) -> bool:
    try:
        return abs(test_statistic(trial, design, tau0)) <= z
    except DegenerateVarianceError:
        adj = trial.cluster_y - tau0 * trial.cluster_d
        t = trial.z_array.astype(bool)
        return adj[t].mean() == adj[~t].mean()


def quadratic_oracle(n_trials: int = 100, seed: int = 0, alpha: float = 0.05, step: float = 1e-3) -> dict:
    """Closed-form tau-set against a brute-force scan of |T(tau0)| <= z."""
    rng = _spawn(seed, 1)
    probs = {"complier": 0.6, "never_taker": 0.4}
    disagreements, points, max_endpoint_gap, shapes = 0, 0, 0.0, {}
    done = 0
    while done < n_trials:
        J = int(rng.integers(8, 31))
        pop = random_population(GeneratorParams(n_clusters=J, min_size=2, max_size=6, type_probs=probs,
                                                outcome_mode="binary", require=("A2", "A4.1")), rng)
        design = Design(J, J // 2)
        trial = realize(pop, sample_assignment(design, rng))
        cs = tau_confidence_interval(trial, design, alpha)
        ends = cs.endpoints
        if cs.shape in ("empty",):
            continue
        done += 1
        shapes[cs.shape] = shapes.get(cs.shape, 0) + 1
        for e in ends:
            max_endpoint_gap = max(max_endpoint_gap, abs(abs(test_statistic(trial, design, e)) - cs.z))
        pe = est.point_estimates(trial, design)
        centre = pe.tau_hat if pe.tau_hat is not None else 0.0
        lo = min(ends + [centre]) - 2.0
        hi = max(ends + [centre]) + 2.0
        grid = np.arange(math.floor(lo / step), math.ceil(hi / step) + 1) * step
        for tau0 in grid:
            if any(abs(tau0 - e) <= step for e in ends):
                continue
            points += 1
            disagreements += cs.contains(float(tau0)) != _grid_membership(trial, design, float(tau0), cs.z)
    return {
        "suite": "quadratic",
        "passed": disagreements == 0 and max_endpoint_gap < 1e-8,
        "threshold": {"disagreements": 0, "endpoint_abs_T_minus_z": 1e-8},
        "measured": {"trials": n_trials, "grid_points": points, "disagreements": disagreements,
                     "max_endpoint_gap": max_endpoint_gap, "shapes": shapes},
    }


def curves() -> dict:
    grid = [round(0.05 * i, 2) for i in range(1, 20)]
    rows = est.bound_curves([0.75, 1.25], grid)
    pe_lo_positive = all(r["pe_lo"] > 0 for r in rows if r["tau"] == 1.25)
    row = next(r for r in rows if r["tau"] == 0.75 and r["p_co"] == 0.75)
    te = (row["te_lo"], row["te_hi"])
    te_ok = abs(te[0] - 0.75 + 1 / 3) <= 1e-9 and abs(te[1] - 0.75) <= 1e-9
    return {
        "suite": "curves",
        "passed": pe_lo_positive and te_ok,
        "threshold": {"tau_1.25_pe_lower": "> 0 at every compliance level", "tau_0.75_p_0.75_te": [0.4167, 0.75],
                      "tolerance": 1e-9},
        "measured": {"tau_1.25_min_pe_lower": min(r["pe_lo"] for r in rows if r["tau"] == 1.25),
                     "tau_0.75_p_0.75_te": list(te)},
    }


SUITES = {
    "mixture": mixture,
    "one_sided_mixture": one_sided_mixture,
    "unbiasedness": unbiasedness,
    "impossibility": impossibility,
    "identity": linear_identity,
    "consistency": consistency,
    "pivotality": pivotality,
    "coverage": coverage,
    "quadratic": quadratic_oracle,
    "curves": curves,
}


def run_suite(name: str, **kwargs) -> dict:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](**kwargs)
