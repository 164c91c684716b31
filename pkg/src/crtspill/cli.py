"""Command-line interface: ``crtspill <command> [options]``.

Commands: simulate, estimate, region, curves, impossible, verify. Every
report echoes the resolved config, the seed and the package version.
Exit status is 0 on success, 1 when a verification suite fails and 2 on
invalid input.
"""
from __future__ import annotations

import argparse
import inspect
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import estimation as est
from . import verify as verify_mod
from .impossibility import TARGETS, build_counterexample, verify_counterexample
from .inference import simultaneous_region, tau_confidence_interval
from .io import (
    ColumnMap,
    RunConfig,
    TrialParseError,
    make_report,
    read_population,
    read_trial_csv,
    rows_to_csv,
    trial_to_csv,
    write_population,
)
from .population import AssumptionViolation
from .randomization import Design, EnumerationCapExceeded, realize, sample_assignment
from .simulate import ASSUMPTION_FLAGS, GeneratorParams, InfeasibleGenerator, random_population, toy_a

PRESETS = {"toy-a": toy_a}


class UsageError(Exception):
    """Invalid input; reported on stderr with exit status 2."""


def _num(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):  # numpy scalars
        obj = obj.item()
    return _num(obj)


def _flatten(obj, prefix: str = "") -> list[dict]:
    if isinstance(obj, dict):
        rows = []
        for k, v in obj.items():
            rows += _flatten(v, f"{prefix}.{k}" if prefix else str(k))
        return rows
    if isinstance(obj, list):
        rows = []
        for i, v in enumerate(obj):
            rows += _flatten(v, f"{prefix}[{i}]")
        return rows
    return [{"key": prefix, "value": "" if obj is None else obj}]


def _emit(report: dict, config: RunConfig, out: Optional[str]) -> None:
    report = _clean(report)
    if config.output_format == "csv":
        text = rows_to_csv(_flatten(report), ["key", "value"])
    else:
        text = json.dumps(report, indent=2) + "\n"
    _write(text, out)


def _write(text: str, out: Optional[str]) -> None:
    if out and out != "-":
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _config(args, **extra) -> RunConfig:
    try:
        return RunConfig(
            seed=args.seed,
            alpha=args.alpha,
            direction=args.direction,
            grid_resolution=args.grid,
            enumeration_cap=args.cap,
            output_format=args.format or ("csv" if args.command == "curves" else "json"),
            extra=extra,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None


def _restore_interval(lo: float, hi: float, direction: str) -> list[float]:
    return [lo, hi] if direction == est.INCREASE else [-hi, -lo]


def _restore_set(intervals, direction: str) -> list[list[float]]:
    out = [_restore_interval(lo, hi, direction) for lo, hi in intervals]
    return sorted(out)


def _load_trial(args):
    try:
        data = read_trial_csv(args.trial, ColumnMap.parse(args.columns))
    except (TrialParseError, ValueError, OSError) as e:
        raise UsageError(f"{args.trial}: {e}") from None
    return data


# simulate

def _parse_probs(text: str) -> dict:
    probs = {}
    for part in text.split(","):
        k, sep, v = part.partition("=")
        if not sep:
            raise UsageError(f"bad type probability {part!r}; expected e.g. complier=0.5")
        probs[k.strip()] = float(v)
    return probs


def cmd_simulate(args) -> int:
    config = _config(args)
    try:
        if args.population:
            pop, source = read_population(args.population), {"population_file": args.population}
        elif args.preset:
            pop, source = PRESETS[args.preset](), {"preset": args.preset}
        else:
            params = GeneratorParams(
                n_clusters=args.clusters,
                min_size=args.min_size,
                max_size=args.max_size,
                type_probs=_parse_probs(args.probs),
                outcome_mode=args.mode,
                require=tuple(args.require),
            )
            pop = random_population(params, config.seed)
            source = {"generator": {**vars(params), "require": list(params.require)}}
        if args.assignment:
            z = tuple(int(v) for v in args.assignment.split(","))
            if len(z) != pop.J or any(v not in (0, 1) for v in z):
                raise UsageError(f"assignment needs {pop.J} comma-separated bits")
            design = Design(pop.J, sum(z))
        else:
            design = Design(pop.J, args.m if args.m is not None else pop.J // 2)
            z = sample_assignment(design, config.seed)
    except (InfeasibleGenerator, ValueError, OSError) as e:
        raise UsageError(str(e)) from None
    trial = realize(pop, z)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pop_path, trial_path = out_dir / "population.json", out_dir / "trial.csv"
    write_population(pop, pop_path)
    trial_path.write_text(trial_to_csv(trial))
    result = {
        "source": source,
        "design": {"J": design.J, "m": design.m},
        "assignment": list(z),
        "population_file": str(pop_path),
        "trial_file": str(trial_path),
        "assumptions": {
            "A2": pop.relevance_holds,
            "A4": pop.monotonicity_holds,
            "A4.1": pop.one_sided_holds,
            "A6": pop.nonneg_effects_holds(),
        },
    }
    _emit(make_report("simulate", config, result), config, args.out)
    return 0


# estimate

def estimate_report(trial, config: RunConfig, one_sided_rows: list[int], require_one_sided: bool) -> dict:
    direction = config.direction
    if one_sided_rows and require_one_sided:
        raise UsageError(f"one-sided noncompliance violated (receipt in control) at rows {one_sided_rows}")
    design = trial.design
    pe = est.point_estimates(trial, design)
    if pe.tau_D_hat == 0:
        raise UsageError("estimated ITT effect on receipt is 0; the Wald ratio is undefined")
    binary = trial.is_binary()
    diagnostics = []
    if one_sided_rows:
        diagnostics.append(f"receipt in control clusters at rows {one_sided_rows}; bounds need one-sided noncompliance")

    norm = est.normalize_trial(trial, direction)
    npe = est.point_estimates(norm, design)
    bounds = None
    if not one_sided_rows:
        try:
            mode_fn = est.bounds_binary if binary else est.bounds_general
            b = mode_fn(npe.tau_hat, npe.N_CO_hat, npe.N_NT_hat).restored(direction)
            bounds = b.as_dict()
            if b.empty:
                diagnostics.append("empty bound: lower exceeds upper, evidence against non-negative effects")
        except est.BoundsInputError as e:
            diagnostics.append(f"bounds rejected: {e}")

    ci = None
    try:
        cs = tau_confidence_interval(norm, design, config.alpha)
        ci = {
            "alpha": config.alpha,
            "z": cs.z,
            "shape": cs.shape,
            "intervals": _restore_set(cs.intervals, direction),
            "diagnostics": list(cs.diagnostics),
        }
    except (ValueError, ArithmeticError) as e:
        diagnostics.append(f"confidence set unavailable: {e}")

    return {
        "J": design.J,
        "m": design.m,
        "N": trial.N,
        "outcome_mode": "binary" if binary else "real",
        "direction": direction,
        "point_estimates": {
            "tau_Y_hat": pe.tau_Y_hat,
            "tau_D_hat": pe.tau_D_hat,
            "tau_hat": pe.tau_hat,
            "N_CO_hat": pe.N_CO_hat,
            "N_NT_hat": pe.N_NT_hat,
            "p_CO_hat": pe.p_CO_hat,
            "p_NT_hat": pe.p_NT_hat,
        },
        "bounds": bounds,
        "tau_confidence_set": ci,
        "diagnostics": diagnostics,
    }


def cmd_estimate(args) -> int:
    config = _config(args, trial=args.trial, columns=args.columns, one_sided=args.one_sided)
    data = _load_trial(args)
    result = estimate_report(data.trial, config, data.one_sided_violation_rows(), args.one_sided)
    _emit(make_report("estimate", config, result), config, args.out)
    return 0


# region

def region_report(trial, config: RunConfig, one_sided_rows: list[int]):
    if one_sided_rows:
        raise UsageError(f"region needs one-sided noncompliance; receipt in control at rows {one_sided_rows}")
    if not trial.is_binary():
        raise UsageError("region needs binary outcomes")
    direction = config.direction
    norm = est.normalize_trial(trial, direction)
    try:
        reg = simultaneous_region(norm, norm.design, config.alpha, config.grid_resolution)
    except (ValueError, ArithmeticError) as e:
        raise UsageError(str(e)) from None
    xe, ye = reg.x_extent(), reg.y_extent()
    result = {
        "direction": direction,
        "r_hat": reg.r_hat,
        "tau_set": _restore_set(reg.tau_set.intervals, direction),
        "tau_set_shape": reg.tau_set.shape,
        "band": "y + r_hat * x in tau_set" if direction == est.INCREASE else "y + r_hat * x in tau_set, x, y in [-1, 0]",
        "x_extent": _restore_interval(*xe, direction) if xe else None,
        "y_extent": _restore_interval(*ye, direction) if ye else None,
        "covers_full_square": reg.covers_unit_square(),
        "empty": xe is None,
        "grid_resolution": config.grid_resolution,
    }
    return reg, result


def raster_csv(reg, direction: str) -> str:
    sign = 1.0 if direction == est.INCREASE else -1.0
    g = reg.grid
    rows = [
        {"x": sign * float(g[ix]), "y": sign * float(g[iy]), "inside": int(reg.raster[ix, iy])}
        for ix in range(len(g))
        for iy in range(len(g))
    ]
    return rows_to_csv(rows, ["x", "y", "inside"])


def cmd_region(args) -> int:
    config = _config(args, trial=args.trial, columns=args.columns, raster=args.raster)
    data = _load_trial(args)
    reg, result = region_report(data.trial, config, data.one_sided_violation_rows())
    if args.raster:
        Path(args.raster).write_text(raster_csv(reg, config.direction))
    _emit(make_report("region", config, result), config, args.out)
    return 0


# curves

def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


CURVE_HEADER = ["tau", "p_co", "te_lo", "te_hi", "pe_lo", "pe_hi"]


def cmd_curves(args) -> int:
    config = _config(args, taus=args.taus, compliance_grid=args.compliance)
    try:
        rows = est.bound_curves(_float_list(args.taus), _float_list(args.compliance))
    except ValueError as e:
        raise UsageError(str(e)) from None
    if config.output_format == "csv":
        _write(rows_to_csv(rows, CURVE_HEADER), args.out)
    else:
        _emit(make_report("curves", config, {"columns": CURVE_HEADER, "rows": rows}), config, args.out)
    return 0


# impossible

def cmd_impossible(args) -> int:
    sizes = [int(v) for v in args.sizes.split(",")]
    m = args.m if args.m is not None else len(sizes) // 2
    targets = list(TARGETS) if args.target == "all" else [args.target]
    config = _config(args, sizes=sizes, m=m, targets=targets)
    try:
        design = Design(len(sizes), m)
        verdicts = [
            verify_counterexample(build_counterexample(t, sizes, seed=config.seed), design, config.enumeration_cap).as_dict()
            for t in targets
        ]
    except (ValueError, EnumerationCapExceeded) as e:
        raise UsageError(str(e)) from None
    confirmed = all(v["confirmed"] for v in verdicts)
    result = {
        "verdict": "counterexample confirmed" if confirmed else "counterexample not confirmed",
        "design": {"J": design.J, "m": design.m},
        "cases": verdicts,
    }
    _emit(make_report("impossible", config, result), config, args.out)
    return 0 if confirmed else 1


# verify

def cmd_verify(args) -> int:
    names = list(verify_mod.SUITES) if args.suite == "all" else [args.suite]
    options = {"J": args.J, "reps": args.reps, "n_pops": args.pops, "seed": args.seed, "alpha": args.alpha}
    config = _config(args, suite=args.suite, J=args.J, reps=args.reps, pops=args.pops)
    results = []
    for name in names:
        fn = verify_mod.SUITES[name]
        params = inspect.signature(fn).parameters
        kw = {k: v for k, v in options.items() if v is not None and k in params}
        results.append(fn(**kw))
    passed = all(r["passed"] for r in results)
    _emit(make_report("verify", config, {"passed": passed, "suites": results}), config, args.out)
    return 0 if passed else 1


# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run configuration")
    g.add_argument("--seed", type=int, default=0, help="non-negative RNG seed (default 0)")
    g.add_argument("--alpha", type=float, default=0.05, help="significance level in (0, 1) (default 0.05)")
    g.add_argument(
        "--direction",
        default=est.INCREASE,
        choices=["increase", "decrease", "beneficial-increases-y", "beneficial-decreases-y"],
        help="which way a beneficial treatment moves the outcome (default increase)",
    )
    g.add_argument("--grid", type=int, default=201, help="raster points per axis (default 201)")
    g.add_argument("--cap", type=int, default=10**6, help="maximum assignments to enumerate (default 1e6)")
    g.add_argument("--format", choices=["json", "csv"], default=None, help="report format (default json; csv for curves)")
    g.add_argument("--out", default=None, help="report destination (default stdout)")

    parser = argparse.ArgumentParser(
        prog="crtspill",
        description="Compliance, spillovers and bounds in cluster randomized trials.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="draw a population and realize one trial")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--population", help="population JSON to realize")
    src.add_argument("--preset", choices=sorted(PRESETS), help="built-in population")
    p.add_argument("--clusters", type=int, default=10, help="number of clusters for the generator")
    p.add_argument("--min-size", type=int, default=1)
    p.add_argument("--max-size", type=int, default=4)
    p.add_argument("--probs", default="complier=0.6,never_taker=0.4", help="type probabilities, e.g. complier=0.5,always_taker=0.2")
    p.add_argument("--mode", choices=["binary", "real"], default="binary")
    p.add_argument("--require", nargs="*", default=[], choices=ASSUMPTION_FLAGS, help="assumptions to enforce")
    p.add_argument("--m", type=int, default=None, help="treated clusters (default J // 2)")
    p.add_argument("--assignment", help="explicit comma-separated cluster assignment, e.g. 0,1")
    p.add_argument("--out-dir", default=".", help="directory for population.json and trial.csv")
    p.set_defaults(func=cmd_simulate)

    for name, func, helptext in (
        ("estimate", cmd_estimate, "point estimates, bounds and the tau confidence set"),
        ("region", cmd_region, "simultaneous confidence region for the two effects"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("trial", help="trial CSV (cluster_id,z,d,y)")
        p.add_argument("--columns", help="column mapping, e.g. cluster_id=school,z=treat,d=takeup,y=pass")
        if name == "estimate":
            p.add_argument("--one-sided", action="store_true", help="refuse data with receipt in control clusters")
        else:
            p.add_argument("--raster", help="write the membership grid as CSV (x,y,inside)")
        p.set_defaults(func=func)

    p = sub.add_parser("curves", parents=[common], help="bound endpoints over complier proportions (CSV)")
    p.add_argument("--taus", default="0.75,1.25", help="comma-separated Wald ratios (may be empty)")
    p.add_argument(
        "--compliance",
        default=",".join(f"{0.05 * i:.2f}" for i in range(1, 20)),
        help="comma-separated complier proportions in (0, 1)",
    )
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("impossible", parents=[common], help="confirm the non-identification counterexample")
    p.add_argument("--target", choices=["all", *TARGETS], default="all")
    p.add_argument("--sizes", default="2,2", help="comma-separated cluster sizes (cluster 0 needs 2+)")
    p.add_argument("--m", type=int, default=None, help="treated clusters (default J // 2)")
    p.set_defaults(func=cmd_impossible)

    p = sub.add_parser("verify", parents=[common], help="run property and simulation suites")
    p.add_argument("suite", choices=["all", *verify_mod.SUITES])
    p.add_argument("--J", type=int, default=None, help="clusters (pivotality, coverage)")
    p.add_argument("--reps", type=int, default=None, help="Monte Carlo replications")
    p.add_argument("--pops", type=int, default=None, help="random populations (identity suites)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, AssumptionViolation) as e:
        print(f"crtspill {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
