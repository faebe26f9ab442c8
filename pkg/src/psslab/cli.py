"""Command line front end.

Subcommands cover the pipeline stages: ``analyze`` (exact LP study of an
instance), ``solve-hjb`` (workload equation and threshold policy),
``sim-wcp`` (reflected-diffusion Monte Carlo), ``sim-qcp`` (prelimit
event simulation with pathwise checks), and ``verify-bound`` (full
lower-bound comparison). Reports are JSON documents on stdout (and under
--out when given) embedding the instance's sha256, the resolved
configuration, the seed, and the toolkit version; exact rationals are
rendered as {"exact": "p/q", "approx": float}. Reports are byte-stable
for a fixed (instance, config, seed) except for the top-level "timing"
key. Traces are CSV, long form ``t,series,name,value`` by default or one
column per series with --wide.

Exit status: 0 success; 10 unreadable/invalid instance or bad options;
21/22/23 structural assumption failure (criticality, full server load,
dual uniqueness; 20 when the failing part is not identified); 30 solver
or simulator failure; 40 lower-bound verdict FAIL.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from fractions import Fraction

import numpy as np

from . import __version__
from .hjb import (
    HjbConfig,
    HjbConvergenceError,
    HjbSolution,
    ModePolicy,
    compute_v0,
    dominant_mode,
    extract_policy,
    single_mode_value,
    solve_hjb,
)
from .lp import (
    AnalysisError,
    AssumptionError,
    DualSolution,
    LpAnalysis,
    analyze,
)
from .model import InstanceError, PssInstance, load_instance
from .qcp import (
    MinimumNError,
    PolicySpec,
    SimulatorInvariantError,
    check_trace_inequalities,
    compute_scaled,
    estimate_qcp_cost,
    run_qcp,
    verify_lower_bound,
)
from .wcp import estimate_wcp_cost, simulate_wcp

EXIT_OK = 0
EXIT_PARSE = 10
EXIT_ASSUMPTION = 20
EXIT_SOLVER = 30
EXIT_BOUND_FAIL = 40


class CliError(Exception):
    """Unusable command line options."""


def _assumption_status(parts: tuple[int, ...]) -> int:
    # 21/22/23 by first failing part, generic 20 otherwise
    return EXIT_ASSUMPTION + parts[0] if parts else EXIT_ASSUMPTION


def _rat(v: Fraction) -> dict:
    return {"exact": str(v), "approx": float(v)}


def _finite(v: float) -> float | None:
    return None if math.isinf(v) else float(v)


def _dual_doc(dual: DualSolution) -> dict:
    return {"y": [_rat(v) for v in dual.y], "z": [_rat(v) for v in dual.z]}


def _analysis_doc(analysis: LpAnalysis) -> dict:
    inst = analysis.instance
    rep = analysis.assumptions
    doc = {
        "activities": [
            {"class": a.class_index, "server": a.server_index} for a in inst.activities
        ],
        "rho_star": _rat(analysis.rho_star),
        "modes": [
            {"index": m.index, "xi": [_rat(v) for v in m.xi], "degenerate": m.degenerate}
            for m in analysis.modes
        ],
        "assumptions": {
            "critical": rep.critical,
            "fully_loaded": rep.fully_loaded,
            "dual_unique": rep.dual_unique,
            "all_pass": rep.all_pass,
            "failing_parts": list(rep.failing_parts),
            "load_witness": None
            if rep.load_witness is None
            else {
                "mode": rep.load_witness[0],
                "server": rep.load_witness[1],
                "load": _rat(rep.load_witness[2]),
            },
            "dual_witnesses": None
            if rep.dual_witnesses is None
            else [_dual_doc(w) for w in rep.dual_witnesses],
        },
        "dual": None if analysis.dual is None else _dual_doc(analysis.dual),
        "classification": None
        if analysis.classification is None
        else [c.name.lower() for c in analysis.classification],
        "q": analysis.q,
        "coefficients": None
        if analysis.coefficients is None
        else [
            {"mode": m, "b": b, "sigma2": s2}
            for m, (b, s2) in enumerate(analysis.coefficients)
        ],
        "decomposition": {
            "status": analysis.decomposition.status,
            "detail": analysis.decomposition.detail,
            "alpha": None
            if analysis.decomposition.decomposition is None
            else [_rat(v) for v in analysis.decomposition.decomposition.alpha],
            "beta": None
            if analysis.decomposition.decomposition is None
            else [_rat(v) for v in analysis.decomposition.decomposition.beta],
        },
    }
    return doc


def _hjb_doc(solution: HjbSolution) -> dict:
    policy = extract_policy(solution)
    return {
        "coefficients": [
            {"mode": m, "b": b, "sigma2": s2}
            for m, (b, s2) in enumerate(solution.coefficients)
        ],
        "gamma": solution.gamma,
        "grid_n": len(solution.grid) - 1,
        "z_max": float(solution.grid[-1]),
        "u0": solution.u0,
        "switch_points": list(solution.switch_points),
        "policy_intervals": [
            {"lo": lo, "hi": _finite(hi), "mode": m} for lo, hi, m in policy.intervals
        ],
        "dominant_mode": dominant_mode(solution.coefficients),
        "residual_max": solution.residual_max,
        "excess_min": solution.excess_min,
        "iterations": solution.iterations,
    }


def _estimate_doc(est) -> dict:
    return {
        "mean": est.mean,
        "half_width_95": est.half_width_95,
        "n_paths": est.n_paths,
        "step": est.step,
        "horizon": est.horizon,
        "truncation_bound": est.truncation_bound,
    }


def _meta(args: argparse.Namespace, raw: bytes, config: dict) -> dict:
    return {
        "command": args.command,
        "toolkit_version": __version__,
        "instance_sha256": hashlib.sha256(raw).hexdigest(),
        "seed": getattr(args, "seed", None),
        "config": config,
    }


def _emit(doc: dict, args: argparse.Namespace, started: float) -> None:
    doc = dict(doc)
    doc["timing"] = {"seconds": time.perf_counter() - started}
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"{args.command}-report.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _fmt_cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path: str, times, series: str, columns: dict, wide: bool) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        if wide:
            out.writerow(["t"] + list(columns))
            for r, t in enumerate(times):
                out.writerow([_fmt_cell(t)] + [_fmt_cell(col[r]) for col in columns.values()])
        else:
            out.writerow(["t", "series", "name", "value"])
            for r, t in enumerate(times):
                for name, col in columns.items():
                    out.writerow([_fmt_cell(t), series, name, _fmt_cell(col[r])])


def _load(args: argparse.Namespace) -> tuple[bytes, PssInstance]:
    with open(args.instance, "rb") as fh:
        raw = fh.read()
    return raw, load_instance(raw)


def _require_assumptions(analysis: LpAnalysis) -> None:
    rep = analysis.assumptions
    if rep.all_pass:
        return
    names = {1: "not critical (rho* != 1)", 2: "servers not fully loaded", 3: "dual not unique"}
    detail = "; ".join(names[p] for p in rep.failing_parts)
    raise AssumptionError(f"instance fails structural assumptions: {detail}", rep.failing_parts)


def _parse_policy(text: str, analysis: LpAnalysis, solution_of: "callable") -> PolicySpec:
    parts = text.split(":")
    kind = parts[0]
    if kind == "static":
        if len(parts) < 2 or not parts[1].lstrip("-").isdigit():
            raise CliError("static policy syntax is static:<mode>[:wc]")
        mode = int(parts[1])
        if not 0 <= mode < len(analysis.modes):
            raise CliError(f"mode {mode} out of range 0..{len(analysis.modes) - 1}")
        return PolicySpec.static_mode(mode, work_conserving="wc" in parts[2:])
    if kind == "threshold":
        return PolicySpec.workload_threshold(
            extract_policy(solution_of()), work_conserving="wc" in parts[1:]
        )
    if kind == "priority":
        priorities = tuple(tuple(acts) for acts in analysis.instance.server_activities)
        return PolicySpec.server_priority(priorities)
    raise CliError(f"unknown policy {text!r}; use static:<mode>[:wc], threshold[:wc], priority")


def cmd_analyze(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    raw, inst = _load(args)
    analysis = analyze(inst)
    doc = {"meta": _meta(args, raw, {}), "analysis": _analysis_doc(analysis)}
    _emit(doc, args, started)
    rep = analysis.assumptions
    return EXIT_OK if rep.all_pass else _assumption_status(rep.failing_parts)


def cmd_solve_hjb(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    raw, inst = _load(args)
    analysis = analyze(inst)
    _require_assumptions(analysis)
    config = HjbConfig(z_max=args.z_max, grid_n=args.grid_n)
    solution = solve_hjb(analysis.coefficients, inst.gamma, config)
    doc = {
        "meta": _meta(args, raw, {"grid_n": args.grid_n, "z_max": args.z_max}),
        "hjb": _hjb_doc(solution),
        "v0": compute_v0(inst, analysis, solution),
        "q": analysis.q,
    }
    _emit(doc, args, started)
    if args.out:
        _write_csv(
            os.path.join(args.out, "hjb-solution.csv"),
            solution.grid,
            "hjb",
            {"u": solution.u, "du": solution.du, "d2u": solution.d2u, "mode": solution.mode_at},
            args.wide,
        )
    return EXIT_OK


def cmd_sim_wcp(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    raw, inst = _load(args)
    analysis = analyze(inst)
    _require_assumptions(analysis)
    coeffs = analysis.coefficients
    reference_u0 = None
    if args.policy == "hjb":
        solution = solve_hjb(coeffs, inst.gamma, HjbConfig(z_max=args.z_max, grid_n=args.grid_n))
        policy = extract_policy(solution)
        reference_u0 = solution.u0
    elif args.policy.startswith("static:"):
        mode = int(args.policy.split(":")[1])
        if not 0 <= mode < len(coeffs):
            raise CliError(f"mode {mode} out of range 0..{len(coeffs) - 1}")
        policy = ModePolicy.constant(mode)
        b, s2 = coeffs[mode]
        reference_u0 = single_mode_value(b, s2, inst.gamma).u0
    else:
        raise CliError("sim-wcp policy must be hjb or static:<mode>")
    est = estimate_wcp_cost(
        policy,
        coeffs,
        inst.gamma,
        step=args.step,
        horizon=args.horizon,
        n_paths=args.reps,
        seed=args.seed,
    )
    doc = {
        "meta": _meta(
            args,
            raw,
            {
                "policy": args.policy,
                "step": args.step,
                "horizon": args.horizon,
                "reps": args.reps,
                "grid_n": args.grid_n,
                "z_max": args.z_max,
            },
        ),
        "estimate": _estimate_doc(est),
        "reference_u0": reference_u0,
        "policy_intervals": [
            {"lo": lo, "hi": _finite(hi), "mode": m} for lo, hi, m in policy.intervals
        ],
    }
    _emit(doc, args, started)
    if args.out:
        horizon = args.horizon if args.horizon is not None else 12.0 / inst.gamma
        path = simulate_wcp(policy, coeffs, 0.0, args.step, horizon, args.seed, path_id=0)
        _write_csv(
            os.path.join(args.out, "wcp-path.csv"),
            path.times,
            "wcp",
            {"z": path.values, "local_time": path.local_time, "mode": path.mode_trace},
            args.wide,
        )
    return EXIT_OK


def cmd_sim_qcp(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    raw, inst = _load(args)
    analysis = analyze(inst)
    _require_assumptions(analysis)

    def solution_of() -> HjbSolution:
        return solve_hjb(analysis.coefficients, inst.gamma, HjbConfig())

    policy = _parse_policy(args.policy, analysis, solution_of)
    trace = run_qcp(inst, analysis, args.n, policy, horizon=args.horizon, seed=args.seed, rep=0)
    series = compute_scaled(trace, args.n, analysis)
    checks = check_trace_inequalities(series, analysis)
    estimate = None
    if args.reps >= 2:
        estimate = _estimate_doc(
            estimate_qcp_cost(
                inst, analysis, args.n, policy, args.reps, horizon=args.horizon, seed=args.seed
            )
        )
    doc = {
        "meta": _meta(
            args,
            raw,
            {"n": args.n, "policy": args.policy, "horizon": args.horizon, "reps": args.reps},
        ),
        "n": args.n,
        "policy": policy.label,
        "events": int(len(trace.times)) - 2,
        "horizon": trace.horizon,
        "estimate": estimate,
        "identity_residual": series.identity_residual,
        "checks": {
            "cost_vs_workload": checks.cost_vs_workload,
            "cost_equality_on_axis": checks.cost_equality_on_axis,
            "reflection": checks.reflection,
            "state_nonneg": checks.state_nonneg,
            "idleness_monotone": checks.idleness_monotone,
            "max_relative_violation": checks.max_relative_violation,
        },
    }
    _emit(doc, args, started)
    if args.out:
        columns = {"w": series.w, "f": series.f, "l": series.l, "l_an": series.l_an, "h": series.h}
        for i in range(inst.num_classes):
            columns[f"x_hat[{i + 1}]"] = series.x_hat[:, i]
        for k in range(inst.num_servers):
            columns[f"i_hat[{k + 1}]"] = series.i_hat[:, k]
        _write_csv(
            os.path.join(args.out, "qcp-scaled.csv"), series.times, "qcp", columns, args.wide
        )
    return EXIT_OK


def cmd_verify_bound(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    raw, inst = _load(args)
    analysis = analyze(inst)
    _require_assumptions(analysis)
    solution = solve_hjb(
        analysis.coefficients, inst.gamma, HjbConfig(z_max=args.z_max, grid_n=args.grid_n)
    )
    if args.policy:
        policies = tuple(
            _parse_policy(text, analysis, lambda: solution) for text in args.policy
        )
    else:
        policies = tuple(
            PolicySpec.static_mode(m) for m in range(len(analysis.modes))
        ) + (PolicySpec.workload_threshold(extract_policy(solution)),)
    try:
        n_list = tuple(int(v) for v in args.n_list.split(","))
    except ValueError as exc:
        raise CliError("--n-list must be comma-separated integers") from exc
    report = verify_lower_bound(
        inst,
        analysis,
        solution,
        n_list,
        policies,
        n_reps=args.reps,
        horizon=args.horizon,
        seed=args.seed,
    )
    doc = {
        "meta": _meta(
            args,
            raw,
            {
                "n_list": list(n_list),
                "policies": [p.label for p in policies],
                "reps": args.reps,
                "horizon": args.horizon,
                "grid_n": args.grid_n,
                "z_max": args.z_max,
            },
        ),
        "v0": report.v0,
        "u0": report.u0,
        "runs": [
            {
                "n": r.n,
                "policy": r.policy,
                "mean": r.mean,
                "half_width_95": r.half_width_95,
                "margin": r.margin,
                "ok": r.ok,
            }
            for r in report.runs
        ],
        "min_by_n": [{"n": n, "best_cost": c} for n, c in report.min_by_n],
        "verdict": report.verdict,
    }
    _emit(doc, args, started)
    return EXIT_OK if report.verdict == "PASS" else EXIT_BOUND_FAIL


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psslab",
        description="Exact LP analysis, workload-equation solving, and simulation "
        "for critically loaded parallel server systems.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--instance", required=True, help="instance JSON file")
        sp.add_argument("--out", default=None, help="directory for report and trace files")
        sp.add_argument("--seed", type=int, default=0, help="64-bit stream seed (default 0)")
        sp.add_argument("--wide", action="store_true", help="wide CSV traces (one column per series)")

    sp = sub.add_parser("analyze", help="exact LP study and assumption checks")
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("solve-hjb", help="solve the workload equation")
    common(sp)
    sp.add_argument("--grid-n", type=int, default=4000)
    sp.add_argument("--z-max", type=float, default=None)
    sp.set_defaults(func=cmd_solve_hjb)

    sp = sub.add_parser("sim-wcp", help="Monte Carlo cost of the reflected diffusion")
    common(sp)
    sp.add_argument("--policy", default="hjb", help="hjb or static:<mode>")
    sp.add_argument("--step", type=float, default=1e-3)
    sp.add_argument("--horizon", type=float, default=None)
    sp.add_argument("--reps", type=int, default=10_000, help="number of paths")
    sp.add_argument("--grid-n", type=int, default=4000)
    sp.add_argument("--z-max", type=float, default=None)
    sp.set_defaults(func=cmd_sim_wcp)

    sp = sub.add_parser("sim-qcp", help="event-driven prelimit simulation")
    common(sp)
    sp.add_argument("--n", type=int, required=True, help="scaling parameter")
    sp.add_argument(
        "--policy", default="threshold", help="static:<mode>[:wc], threshold[:wc], or priority"
    )
    sp.add_argument("--horizon", type=float, default=None)
    sp.add_argument("--reps", type=int, default=16, help="replications for the cost estimate")
    sp.set_defaults(func=cmd_sim_qcp)

    sp = sub.add_parser("verify-bound", help="compare simulated costs against the bound")
    common(sp)
    sp.add_argument("--n-list", default="25,100,400")
    sp.add_argument(
        "--policy", action="append", default=None, help="repeatable; default: every static mode plus threshold"
    )
    sp.add_argument("--reps", type=int, default=64)
    sp.add_argument("--horizon", type=float, default=None)
    sp.add_argument("--grid-n", type=int, default=4000)
    sp.add_argument("--z-max", type=float, default=None)
    sp.set_defaults(func=cmd_verify_bound)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InstanceError as exc:
        print(f"instance error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except MinimumNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except AssumptionError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return _assumption_status(exc.failing_parts)
    except HjbConvergenceError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (AnalysisError, SimulatorInvariantError) as exc:
        print(f"internal check failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
