"""Command-line interface: certify, simulate, equilibria, lyapunov, geometry, demo.

Every randomized subcommand takes a seed and produces byte-identical
machine output for identical (seed, config).  Human-readable summaries go
to stdout; machine artifacts (JSON reports, CSV series) go to the output
directory.  Exit codes: 0 success, 1 check failure, 2 usage error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import certify as certify_mod
from . import equilibria as eq_mod
from . import geometry as geo_mod
from . import lyapunov as lyap_mod
from .errors import ConeflowError
from .integrate import IntegrateOptions, integrate, order_preservation_trial
from .numerics import Tol
from .system import SystemSpec, builtin_chem, check_grad_dual, check_integral, load_system

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, (int, float, np.floating))
                              else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _report_rows(obj) -> list[tuple[str, str]]:
    flat = []

    def walk(prefix, value):
        if isinstance(value, dict):
            for k in sorted(value):
                walk(f"{prefix}.{k}" if prefix else str(k), value[k])
        elif isinstance(value, list):
            flat.append((prefix, json.dumps(value)))
        else:
            flat.append((prefix, str(value)))

    walk("", _jsonable(obj))
    return flat


def _emit_report(args, name: str, obj) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        path = out / f"{name}.csv"
        _write_csv(path, ["key", "value"], _report_rows(obj))
    else:
        path = out / f"{name}.json"
        _write_json(path, obj)
    return path


def _tol(args) -> Tol:
    return Tol(abs=args.tol_abs, rel=args.tol_rel)


def _load(args) -> SystemSpec:
    if args.builtin:
        if args.builtin != "chem":
            raise ConeflowError(f"unknown builtin {args.builtin!r}")
        rates = [float(v) for v in args.rates.split(",")] if getattr(args, "rates", None) else [1.0] * 4
        if len(rates) != 4:
            raise ConeflowError("--rates needs four comma-separated positive numbers")
        return builtin_chem(*rates)
    if not args.system:
        raise ConeflowError("provide --system PATH or --builtin chem")
    return load_system(args.system, _tol(args))


def _parse_vec(text: str, dim: int) -> list[float]:
    vals = [float(v) for v in text.split(",")]
    if len(vals) != dim:
        raise ConeflowError(f"expected {dim} comma-separated values, got {len(vals)}")
    return vals


def _validate_system(s: SystemSpec, seed: int) -> list[str]:
    """Quick hypothesis screen run before any subcommand does real work."""
    problems = []
    rep = check_integral(s, 100, seed)
    if not rep.passed:
        problems.append(f"conservation violated: {rep.max_violation:.3e} "
                        f"at {rep.worst_point.tolist()}")
    rep = check_grad_dual(s, 100, seed)
    if not rep.passed:
        problems.append("gradient leaves the dual-cone interior at "
                        f"{rep.worst_point.tolist()}")
    return problems


def cmd_certify(args) -> int:
    s = _load(args)
    integ = check_integral(s, args.samples, args.seed)
    dual = check_grad_dual(s, args.samples, args.seed)
    cert = certify_mod.certify_all(s, args.samples, args.seed, _tol(args))
    report = {
        "system": s.name or str(args.system),
        "seed": args.seed,
        "n_samples": args.samples,
        "integral_check": _jsonable(integ),
        "grad_dual_check": _jsonable(dual),
        "certificate": _jsonable(cert),
        "note": "sampled certificates are non-falsification evidence, not proofs",
    }
    path = _emit_report(args, "certify", report)
    ok = (integ.passed and dual.passed and cert.cooperative_pass
          and cert.irreducible_pass)
    print(f"conservation      {'PASS' if integ.passed else 'FAIL'} "
          f"(max violation {integ.max_violation:.3e})")
    print(f"dual interior     {'PASS' if dual.passed else 'FAIL'}")
    print(f"cooperative       {'PASS' if cert.cooperative_pass else 'FAIL'} "
          f"(worst margin {cert.margin:.3e})")
    print(f"irreducible       {'PASS' if cert.irreducible_pass else 'FAIL'} "
          f"(alpha up to {cert.alpha_used})")
    print(f"note: sampled on {args.samples} points (seed {args.seed}); "
          "non-falsification evidence, not a proof")
    print(f"report: {path}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_simulate(args) -> int:
    s = _load(args)
    problems = _validate_system(s, args.seed)
    if problems:
        for p in problems:
            print(f"refusing to simulate: {p}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    x0 = _parse_vec(args.x0, s.dim)
    opts = IntegrateOptions(method="rk4" if args.rk4 else "rk45",
                            fixed_step=args.step)
    times = np.linspace(0.0, args.t_end, args.samples)
    traj = integrate(s, x0, args.t_end, opts, sample_times=times)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trajectory.csv"
    header = ["t"] + [f"x{i+1}" for i in range(s.dim)] + ["H"]
    rows = [[t] + list(st) + [s.integral_at(st)]
            for t, st in zip(traj.times, traj.states)]
    _write_csv(path, header, rows)
    print(f"integrated to t={args.t_end}; drift {traj.drift:.3e}; "
          f"converged={traj.converged}"
          + (f" at t={traj.converged_at:.6g}" if traj.converged_at else ""))
    print(f"final state: {traj.final_state().tolist()}")
    print(f"series: {path}")
    return EXIT_OK


def cmd_equilibria(args) -> int:
    s = _load(args)
    problems = _validate_system(s, args.seed)
    if problems:
        for p in problems:
            print(f"refusing to continue: {p}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    grid = np.linspace(args.h_min, args.h_max, args.steps + 1)
    grid = np.unique(np.concatenate([[0.0], grid[grid >= 0.0]]))
    curve = eq_mod.continue_curve(s, grid, multistart=args.multistart, seed=args.seed)
    boundary = eq_mod.assert_no_boundary_equilibria(curve, s)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "equilibria.csv"
    header = ["h"] + [f"x{i+1}" for i in range(s.dim)] + ["residual"]
    rows = []
    for h, e in zip(curve.levels, curve.states):
        rows.append([h] + list(e) + [float(np.linalg.norm(s.field_at(e)))])
    _write_csv(path, header, rows)
    print(f"continuation frontier: h={curve.h_max_reached} "
          f"({len(curve)} samples, {len(curve.failures)} recorded failures)")
    print(f"strict ordering: {'PASS' if boundary.passed else 'FAIL'}")
    print(f"series: {path}")
    ok = boundary.passed and not curve.failures
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_lyapunov(args) -> int:
    s = _load(args)
    problems = _validate_system(s, args.seed)
    if problems:
        for p in problems:
            print(f"refusing to evaluate: {p}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    x0 = _parse_vec(args.x0, s.dim)
    h0 = s.integral_at(x0)
    h_cap = h0 * 1.2 + 0.5
    grid = np.linspace(0.0, h_cap, max(2, args.curve_steps) + 1)
    curve = eq_mod.continue_curve(s, grid, multistart=0, seed=args.seed)
    if curve.h_max_reached < h_cap:
        print(f"warning: branch continuation stopped at h={curve.h_max_reached}",
              file=sys.stderr)
    ev = lyap_mod.LyapunovEvaluator(s, curve)
    times = np.linspace(0.0, args.t_end, args.samples)
    traj = integrate(s, x0, args.t_end, sample_times=times)
    rows = []
    for t, st in zip(traj.times, traj.states):
        rows.append([t, lyap_mod.eval_L(ev, st), s.integral_at(st),
                     float(np.linalg.norm(s.field_at(st)))])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "lyapunov.csv"
    _write_csv(path, ["t", "L", "H", "normF"], rows)
    rep = lyap_mod.check_increase_along_orbit(ev, traj)
    print(f"L: {rep.initial_L:.9g} -> {rep.final_L:.9g} "
          f"(orbit level {rep.level:.9g}); monotone={'PASS' if rep.passed else 'FAIL'}")
    print(f"series: {path}")
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def cmd_geometry(args) -> int:
    s = _load(args)
    problems = _validate_system(s, args.seed)
    if problems:
        for p in problems:
            print(f"refusing geometry run: {p}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    c = _parse_vec(args.c, s.dim)
    trap = geo_mod.build_trap(s, c, mode=args.mode, k2=args.k2, h=args.level,
                              seed=args.seed, tol=_tol(args))
    if args.geometry_op == "trap":
        path = _emit_report(args, "trap", trap)
        print(f"trap: k1={trap.k1:.9g} k2={trap.k2:.9g} level={trap.h:.9g} "
              f"margins ({trap.margin_wedge:.3e}, {trap.margin_plane:.3e})")
        print(f"report: {path}")
        return EXIT_OK
    sample = geo_mod.levelset_slice_sample(s, trap, n_rays=args.rays, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "slice.csv"
    header = ["theta_index", "t_boundary"] + [f"x{i+1}" for i in range(s.dim)]
    rows = [[r.theta_index, r.t_boundary] + list(r.point) for r in sample.rays]
    _write_csv(path, header, rows)
    print(f"slice at level {sample.level:.9g}: {sample.n_rays} rays, "
          f"star-shaped={'PASS' if sample.star_shaped else 'FAIL'}")
    print(f"series: {path}")
    return EXIT_OK if sample.star_shaped else EXIT_CHECK_FAILED


def cmd_demo(args) -> int:
    if args.demo_target != "chem":
        raise ConeflowError(f"unknown demo target {args.demo_target!r}")
    rates = [float(v) for v in args.rates.split(",")]
    if len(rates) != 4 or any(r <= 0 for r in rates):
        raise ConeflowError("--rates needs four positive comma-separated numbers")
    s = builtin_chem(*rates)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    checks: list[tuple[str, bool, str]] = []

    def record(name: str, ok: bool, detail: str = "") -> None:
        checks.append((name, ok, detail))
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))

    integ = check_integral(s, 500, args.seed)
    record("conservation-identity", integ.passed, f"max violation {integ.max_violation:.3e}")
    dual = check_grad_dual(s, 500, args.seed)
    record("gradient-dual-interior", dual.passed)
    cert = certify_mod.certify_all(s, 500, args.seed)
    record("cooperative", cert.cooperative_pass, f"worst margin {cert.margin:.3e}")
    record("irreducible", cert.irreducible_pass,
           f"formula alpha sufficient: {cert.formula_alpha_sufficient}")
    _write_json(out / "certify.json", {
        "integral_check": integ, "grad_dual_check": dual, "certificate": cert})

    curve = eq_mod.continue_curve(s, np.round(np.arange(0.0, 10.05, 0.1), 10),
                                  multistart=8, seed=args.seed)
    boundary = eq_mod.assert_no_boundary_equilibria(curve, s)
    record("equilibrium-curve", not curve.failures,
           f"frontier h={curve.h_max_reached}")
    record("curve-strict-ordering", boundary.passed)
    _write_csv(out / "curve.csv", ["h", "x1", "x2", "x3", "residual"],
               [[h] + list(e) + [float(np.linalg.norm(s.field_at(e)))]
                for h, e in zip(curve.levels, curve.states)])

    dense = eq_mod.continue_curve(s, np.round(np.arange(0.0, 4.85, 0.05), 10),
                                  multistart=0, seed=args.seed)
    ev = lyap_mod.LyapunovEvaluator(s, dense)

    target = eq_mod.solve_on_levelset(s, 4.0, [1.0, 1.0, 1.0])
    starts = [np.array([0.0, 0.0, 2.0])] + eq_mod.sample_on_levelset(s, 4.0, 19, rng)
    times = np.linspace(0.0, 100.0, 101)
    conv_ok = True
    drift_ok = True
    lyap_ok = True
    worst_gap = 0.0
    worst_drift = 0.0
    for i, x0 in enumerate(starts):
        traj = integrate(s, x0, 100.0, sample_times=times)
        gap = float(np.max(np.abs(traj.final_state() - target)))
        worst_gap = max(worst_gap, gap)
        worst_drift = max(worst_drift, traj.drift)
        if gap > 1e-6:
            conv_ok = False
        if traj.drift > 1e-9:
            drift_ok = False
        rep = lyap_mod.check_increase_along_orbit(ev, traj)
        if not rep.passed:
            lyap_ok = False
        if i == 0:
            _write_csv(out / "trajectory_0.csv", ["t", "x1", "x2", "x3", "H"],
                       [[t] + list(st) + [s.integral_at(st)]
                        for t, st in zip(traj.times, traj.states)])
    record("global-convergence", conv_ok, f"worst gap {worst_gap:.3e}")
    record("conservation-drift", drift_ok, f"worst drift {worst_drift:.3e}")
    record("orbit-L-increase", lyap_ok)

    trial = order_preservation_trial(s, n_pairs=20, t_check=1.0, seed=args.seed)
    record("order-preservation", trial.passed,
           f"worst margin {trial.worst_margin:.3e}")
    _write_json(out / "order_trial.json", trial)

    trap = geo_mod.build_trap(s, target, mode="plus", seed=args.seed)
    sl = geo_mod.levelset_slice_sample(s, trap, n_rays=64, seed=args.seed)
    record("trap-sandwich", trap.margin_wedge > 1e-6 and trap.margin_plane > 1e-6,
           f"margins ({trap.margin_wedge:.3e}, {trap.margin_plane:.3e})")
    record("slice-star-shaped", sl.star_shaped)
    _write_json(out / "trap.json", trap)
    _write_csv(out / "slice.csv",
               ["theta_index", "t_boundary", "x1", "x2", "x3"],
               [[r.theta_index, r.t_boundary] + list(r.point) for r in sl.rays])

    _write_json(out / "summary.json", {
        "rates": rates, "seed": args.seed,
        "checks": [{"name": n, "passed": ok, "detail": d} for n, ok, d in checks],
    })
    print("note: sampled checks are non-falsification evidence, not proofs")
    failing = [n for n, ok, _ in checks if not ok]
    if failing:
        print(f"FIRST FAILING CHECK: {failing[0]}")
        return EXIT_CHECK_FAILED
    print(f"all {len(checks)} checks passed; reports in {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coneflow", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, system=True):
        if system:
            p.add_argument("--system", help="path to a system TOML/JSON file")
            p.add_argument("--builtin", choices=["chem"], help="use a bundled system")
            p.add_argument("--rates", help="builtin chem rates k1f,k1r,k2f,k2r")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--format", choices=["csv", "json"], default="json")
        p.add_argument("--tol-abs", type=float, default=1e-9, dest="tol_abs")
        p.add_argument("--tol-rel", type=float, default=1e-12, dest="tol_rel")

    p = sub.add_parser("certify", help="sampled hypothesis certification")
    common(p)
    p.add_argument("--samples", type=int, default=500)
    p.set_defaults(fn=cmd_certify)

    p = sub.add_parser("simulate", help="integrate one trajectory to CSV")
    common(p)
    p.add_argument("--x0", required=True, help="comma-separated initial state")
    p.add_argument("--t-end", type=float, required=True, dest="t_end")
    p.add_argument("--samples", type=int, default=201, help="number of output rows")
    p.add_argument("--rk4", action="store_true", help="fixed-step classical RK4")
    p.add_argument("--step", type=float, default=1e-3, help="rk4 step size")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("equilibria", help="continue the equilibrium branch")
    common(p)
    p.add_argument("--h-min", type=float, default=0.0, dest="h_min")
    p.add_argument("--h-max", type=float, default=10.0, dest="h_max")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--multistart", type=int, default=16)
    p.set_defaults(fn=cmd_equilibria)

    p = sub.add_parser("lyapunov", help="orbit-monotone scalar along a trajectory")
    common(p)
    p.add_argument("--x0", required=True)
    p.add_argument("--t-end", type=float, required=True, dest="t_end")
    p.add_argument("--samples", type=int, default=201)
    p.add_argument("--curve-steps", type=int, default=96, dest="curve_steps")
    p.set_defaults(fn=cmd_lyapunov)

    p = sub.add_parser("geometry", help="trap construction and slice sampling")
    gsub = p.add_subparsers(dest="geometry_op", required=True)
    for opname in ("trap", "slice"):
        gp = gsub.add_parser(opname)
        common(gp)
        gp.add_argument("--c", required=True, help="base point, comma-separated")
        gp.add_argument("--mode", choices=["plus", "minus"], default="plus")
        gp.add_argument("--k2", type=float, default=None)
        gp.add_argument("--level", type=float, default=None,
                        help="override the trapped level value")
        gp.add_argument("--rays", type=int, default=64)
        gp.set_defaults(fn=cmd_geometry)

    p = sub.add_parser("demo", help="full pipeline on a bundled system")
    p.add_argument("demo_target", choices=["chem"])
    p.add_argument("--rates", default="1,1,1,1")
    common(p, system=False)
    p.set_defaults(fn=cmd_demo)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ConeflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
