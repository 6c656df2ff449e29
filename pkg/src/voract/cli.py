"""Command-line interface: configured runs, analysis, oracles and presets.

Subcommands:

- ``solve``      minimize a configured scenario; write trajectory CSV,
                 events/report/summary JSON and SVG plots; exit 0 iff the
                 solve converged and every enabled check passed.
- ``analyze``    re-analyze a trajectory CSV against a site set.
- ``oracle``     run the dynamic-programming oracle for a scenario.
- ``zones``      print the zone table of a site set as JSON.
- ``mag``        build a particle system, solve an exchange scenario and
                 write per-particle tracks plus the standard analysis.
- ``stability``  solve a sequence of scenarios and report their actions.
- ``preset``     run a named acceptance preset.

Configuration is strict JSON: unknown fields are rejected so presets and
configs stay honest test fixtures. All artifacts are deterministic for a
fixed config and seed; wall-clock timing is only logged, never stored.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import artifacts
from .action import (
    GridSpec,
    Shape,
    SolverConfig,
    dp_oracle,
    evaluate_action,
    minimize,
)
from .analysis import detect_shocks, regularity_report
from .geometry import GeometryError, PointSet, load_point_set
from .mag import build_mag, default_window, particle_paths, window_certificate
from .potential import zone_table
from .presets import PRESET_NAMES, run_preset

__all__ = ["main", "ConfigError", "load_run_config", "execute_run"]


class ConfigError(ValueError):
    """Malformed or unknown configuration fields."""


def _require_keys(obj: dict, allowed: set[str], context: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown fields in {context}: {', '.join(sorted(unknown))}")


def _parse_points(spec: dict, tie_tolerance: float) -> PointSet:
    _require_keys(spec, {"inline", "file", "mag"}, "points")
    given = [k for k in ("inline", "file", "mag") if k in spec]
    if len(given) != 1:
        raise ConfigError("points needs exactly one of inline/file/mag")
    if "inline" in spec:
        return PointSet(np.asarray(spec["inline"], dtype=float), tie_tolerance=tie_tolerance)
    if "file" in spec:
        return load_point_set(spec["file"], tie_tolerance=tie_tolerance)
    mag = spec["mag"]
    _require_keys(mag, {"base_points", "n", "m", "window"}, "points.mag")
    base = np.asarray(mag["base_points"], dtype=float)
    n, m = int(mag["n"]), int(mag["m"])
    window = mag.get("window")
    if window is None:
        window = default_window(base, n, m)
    return build_mag(base, n, m, int(window)).kset


def _parse_shape(spec: dict | None) -> Shape:
    if spec is None:
        return Shape.identity()
    _require_keys(spec, {"kind", "p", "a", "b"}, "shape")
    kind = spec.get("kind", "identity")
    if kind == "identity":
        return Shape.identity()
    if kind == "power":
        return Shape.power(float(spec["p"]))
    if kind == "affine":
        return Shape.affine(float(spec.get("a", 1.0)), float(spec.get("b", 0.0)))
    raise ConfigError(f"unknown shape kind {kind!r}")


def _parse_solver(spec: dict | None) -> SolverConfig:
    if spec is None:
        return SolverConfig()
    allowed = {"M", "refinements", "starts", "seed", "step_init", "grad_tol", "max_iters"}
    _require_keys(spec, allowed, "solver")
    kwargs = {k: spec[k] for k in allowed if k in spec}
    return SolverConfig(**kwargs)


def load_run_config(path: str) -> dict:
    """Read and validate a run configuration file."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    allowed = {"scenario", "points", "tie_tolerance", "shape", "endpoints", "delta",
               "solver", "oracle_grid", "output_dir", "checks", "plots"}
    _require_keys(raw, allowed, "run config")
    for key in ("points", "endpoints", "delta"):
        if key not in raw:
            raise ConfigError(f"run config is missing {key!r}")
    _require_keys(raw["endpoints"], {"start", "end"}, "endpoints")
    checks = raw.get("checks", ["energy", "regularity"])
    bad = set(checks) - {"energy", "regularity"}
    if bad:
        raise ConfigError(f"unknown checks: {sorted(bad)}")
    tie = float(raw.get("tie_tolerance", 1e-9))
    cfg = {
        "scenario": raw.get("scenario", "run"),
        "kset": _parse_points(raw["points"], tie),
        "shape": _parse_shape(raw.get("shape")),
        "x0": np.asarray(raw["endpoints"]["start"], dtype=float),
        "x1": np.asarray(raw["endpoints"]["end"], dtype=float),
        "delta": float(raw["delta"]),
        "solver": _parse_solver(raw.get("solver")),
        "checks": list(checks),
        "plots": bool(raw.get("plots", True)),
        "output_dir": raw.get("output_dir"),
        "oracle_grid": raw.get("oracle_grid"),
        "raw": raw,
    }
    return cfg


def _parse_grid(spec: dict | None, cfg: dict) -> GridSpec:
    if spec is None:
        x0, x1 = cfg["x0"], cfg["x1"]
        margin = max(1.0, 0.5 * float(np.linalg.norm(x1 - x0)))
        lo = np.minimum(x0, x1) - margin
        hi = np.maximum(x0, x1) + margin
        res = float(np.max(hi - lo)) / 200.0
        return GridSpec(lo=lo, hi=hi, resolution=res, time_slices=100)
    _require_keys(spec, {"lo", "hi", "resolution", "time_slices", "vmax"}, "oracle_grid")
    return GridSpec(lo=np.asarray(spec["lo"], dtype=float),
                    hi=np.asarray(spec["hi"], dtype=float),
                    resolution=float(spec["resolution"]),
                    time_slices=int(spec["time_slices"]),
                    vmax=None if spec.get("vmax") is None else float(spec["vmax"]))


def execute_run(cfg: dict, outdir: str) -> tuple[int, dict]:
    """solve -> analyze -> report; returns (exit_code, summary payload)."""
    os.makedirs(outdir, exist_ok=True)
    t0 = time.perf_counter()
    result = minimize(cfg["x0"], cfg["x1"], cfg["delta"], cfg["kset"], cfg["shape"],
                      cfg["solver"])
    elapsed = time.perf_counter() - t0
    kset, shape = cfg["kset"], cfg["shape"]
    events = detect_shocks(result.path, kset)
    report = regularity_report(result.path, kset, shape)

    check_results = {}
    if "energy" in cfg["checks"]:
        tol = max(1e-3, 5.0 * result.path.dt)
        check_results["energy"] = {
            "passed": report.energy_std_away_from_shocks <= tol,
            "value": report.energy_std_away_from_shocks,
            "tolerance": tol,
        }
    if "regularity" in cfg["checks"]:
        check_results["regularity"] = {
            "passed": len(report.second_diff_violations) == 0,
            "value": len(report.second_diff_violations),
            "tolerance": 0,
        }
    ok = result.converged and all(c["passed"] for c in check_results.values())

    registry = artifacts.write_trajectory_csv(
        os.path.join(outdir, "trajectory.csv"), result.path, kset, shape)
    artifacts.write_json(os.path.join(outdir, "events.json"), artifacts.events_payload(events))
    artifacts.write_json(os.path.join(outdir, "report.json"),
                         artifacts.report_payload(report, result.breakdown))
    summary = {
        "scenario": cfg["scenario"],
        "converged": result.converged,
        "grad_norm": result.grad_norm,
        "action": {
            "kinetic": result.breakdown.kinetic,
            "potential": result.breakdown.potential,
            "total": result.breakdown.total,
        },
        "prev_stage_action": result.prev_breakdown.total,
        "starts": [
            {"label": s.label, "action": s.action, "converged": s.converged,
             "dev_from_best": s.dev_from_best}
            for s in result.starts
        ],
        "checks": check_results,
        "class_registry": [list(c) for c in registry],
        "exit_ok": ok,
    }
    artifacts.write_json(os.path.join(outdir, "summary.json"), summary)
    if cfg["plots"]:
        artifacts.write_standard_plots(outdir, result.path, kset, shape, report)
    if not ok:
        artifacts.write_json(os.path.join(outdir, "failure.json"), {
            "scenario": cfg["scenario"],
            "converged": result.converged,
            "failed_checks": [k for k, v in check_results.items() if not v["passed"]],
        })
    print(f"[solve] {cfg['scenario']}: action={result.breakdown.total!r} "
          f"converged={result.converged} checks_ok={ok} ({elapsed:.1f}s)")
    return (0 if ok else 1), summary


def _cmd_solve(args) -> int:
    cfg = load_run_config(args.config)
    outdir = args.out or cfg.get("output_dir") or "run-output"
    code, _ = execute_run(cfg, outdir)
    return code


def _cmd_oracle(args) -> int:
    cfg = load_run_config(args.config)
    outdir = args.out or cfg.get("output_dir") or "oracle-output"
    os.makedirs(outdir, exist_ok=True)
    grid = _parse_grid(cfg.get("oracle_grid"), cfg)
    path = dp_oracle(cfg["x0"], cfg["x1"], cfg["delta"], cfg["kset"], cfg["shape"], grid)
    breakdown = evaluate_action(path, cfg["kset"], cfg["shape"])
    artifacts.write_trajectory_csv(os.path.join(outdir, "oracle_trajectory.csv"),
                                   path, cfg["kset"], cfg["shape"])
    artifacts.write_json(os.path.join(outdir, "oracle_summary.json"), {
        "scenario": cfg["scenario"],
        "action": {"kinetic": breakdown.kinetic, "potential": breakdown.potential,
                   "total": breakdown.total},
        "grid": {"lo": grid.lo, "hi": grid.hi, "resolution": grid.resolution,
                 "time_slices": grid.time_slices},
    })
    print(f"[oracle] {cfg['scenario']}: action={breakdown.total!r}")
    return 0


def _cmd_analyze(args) -> int:
    delta, nodes = artifacts.read_trajectory_csv(args.trajectory)
    if args.points:
        kset = load_point_set(args.points, tie_tolerance=args.tie_tolerance)
    else:
        kset = PointSet(np.asarray(json.loads(args.inline), dtype=float),
                        tie_tolerance=args.tie_tolerance)
    shape = _parse_shape(json.loads(args.shape) if args.shape else None)
    from .action import Path

    traj = Path(delta if args.delta is None else args.delta, nodes)
    events = detect_shocks(traj, kset, window=args.window)
    report = regularity_report(traj, kset, shape, window=args.window)
    outdir = args.out or "analysis-output"
    os.makedirs(outdir, exist_ok=True)
    artifacts.write_json(os.path.join(outdir, "events.json"), artifacts.events_payload(events))
    artifacts.write_json(os.path.join(outdir, "report.json"), artifacts.report_payload(report))
    if args.plots:
        artifacts.write_standard_plots(outdir, traj, kset, shape, report)
    print(f"[analyze] events={len(events)} "
          f"energy_std={report.energy_std_away_from_shocks!r} "
          f"violations={len(report.second_diff_violations)}")
    return 0


def _cmd_zones(args) -> int:
    if args.points:
        kset = load_point_set(args.points, tie_tolerance=args.tie_tolerance)
    else:
        kset = PointSet(np.asarray(json.loads(args.inline), dtype=float),
                        tie_tolerance=args.tie_tolerance)
    lo = np.asarray(json.loads(args.box_lo), dtype=float)
    hi = np.asarray(json.loads(args.box_hi), dtype=float)
    table = zone_table(kset, (lo, hi), probe_count=args.probes, seed=args.seed)
    payload = {
        "etas": table.etas,
        "beta": None if not np.isfinite(table.beta) else table.beta,
        "balanced": table.balanced,
        "balanced_note": "verdict certified on witnessed cells only",
        "witnessed_cells": table.witnessed_cells,
        "unbalanced_witness": (None if table.unbalanced_witness is None
                               else [list(c) for c in table.unbalanced_witness]),
        "coverage": table.coverage,
    }
    text = json.dumps(artifacts._jsonable(payload), indent=1, sort_keys=True)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "zones.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


def _cmd_mag(args) -> int:
    base = np.asarray(json.loads(args.base), dtype=float)
    x0 = np.asarray(json.loads(args.start), dtype=float)
    x1 = np.asarray(json.loads(args.end), dtype=float)
    window = args.window
    if window is None:
        window = default_window(base, args.n, args.m, x0, x1)
    system = build_mag(base, args.n, args.m, window)
    cfg = SolverConfig(M=args.mesh, refinements=args.refinements, starts=args.starts,
                       seed=args.seed)
    shape = Shape.identity()
    result = minimize(x0, x1, args.delta, system.kset, shape, cfg)
    cert = window_certificate(system, result.path)
    outdir = args.out or "mag-output"
    os.makedirs(outdir, exist_ok=True)
    events = detect_shocks(result.path, system.kset)
    report = regularity_report(result.path, system.kset, shape)
    artifacts.write_trajectory_csv(os.path.join(outdir, "trajectory.csv"),
                                   result.path, system.kset, shape)
    artifacts.write_json(os.path.join(outdir, "events.json"), artifacts.events_payload(events))
    artifacts.write_json(os.path.join(outdir, "report.json"),
                         artifacts.report_payload(report, result.breakdown))
    lifted, torus = particle_paths(system, result.path)
    times = result.path.times
    for i, (lift, tor) in enumerate(zip(lifted, torus)):
        with open(os.path.join(outdir, f"particle{i + 1}.csv"), "w", encoding="utf-8") as fh:
            cols = ",".join(f"y{j + 1}" for j in range(system.n))
            tcols = ",".join(f"torus{j + 1}" for j in range(system.n))
            fh.write(f"t,{cols},{tcols}\n")
            for k in range(lift.shape[0]):
                row = [repr(float(times[k]))]
                row += [repr(float(v)) for v in lift[k]]
                row += [repr(float(v)) for v in tor[k]]
                fh.write(",".join(row) + "\n")
    artifacts.write_json(os.path.join(outdir, "summary.json"), {
        "sites": system.kset.n,
        "window": system.window,
        "window_certificate": cert,
        "action": result.breakdown.total,
        "converged": result.converged,
        "events": len(events),
    })
    print(f"[mag] sites={system.kset.n} action={result.breakdown.total!r} "
          f"certificate={cert} events={len(events)}")
    if not cert:
        print("[mag] window certificate FAILED: raise the window and rerun", file=sys.stderr)
        return 1
    return 0


def _cmd_stability(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    _require_keys(raw, {"sequence", "delta", "shape", "solver"}, "stability config")
    shape = _parse_shape(raw.get("shape"))
    solver = _parse_solver(raw.get("solver"))
    delta = float(raw["delta"])
    actions = []
    for i, entry in enumerate(raw["sequence"]):
        _require_keys(entry, {"points", "tie_tolerance", "start", "end"}, f"sequence[{i}]")
        kset = _parse_points(entry["points"], float(entry.get("tie_tolerance", 1e-9)))
        res = minimize(np.asarray(entry["start"], dtype=float),
                       np.asarray(entry["end"], dtype=float),
                       delta, kset, shape, solver)
        actions.append({"index": i, "action": res.breakdown.total,
                        "converged": res.converged})
        print(f"[stability] {i}: action={res.breakdown.total!r} converged={res.converged}")
    gaps = [abs(actions[i]["action"] - actions[i + 1]["action"]) for i in range(len(actions) - 1)]
    payload = {"actions": actions, "gaps": gaps}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        artifacts.write_json(os.path.join(args.out, "stability.json"), payload)
    return 0


def _cmd_preset(args) -> int:
    outcome = run_preset(args.name, outdir=args.out)
    for check in outcome.checks:
        status = "PASS" if check.passed else "FAIL"
        val = "" if check.value is None else f" value={check.value!r}"
        print(f"[{status}] {outcome.name}/{check.name}{val} ({check.tolerance})")
    print(f"[preset] {outcome.name}: criterion {outcome.criterion} "
          f"{'PASSED' if outcome.passed else 'FAILED'} in {outcome.runtime:.1f}s")
    return 0 if outcome.passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="voract",
        description="Action minimization over site-set distance potentials.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="minimize a configured scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("oracle", help="dynamic-programming oracle for a scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("analyze", help="re-analyze a trajectory CSV")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--points", default=None, help="point-set file (d N header)")
    p.add_argument("--inline", default=None, help="inline JSON point list")
    p.add_argument("--shape", default=None, help="shape JSON, e.g. '{\"kind\":\"identity\"}'")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--window", type=int, default=2)
    p.add_argument("--tie-tolerance", type=float, default=1e-9)
    p.add_argument("--plots", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("zones", help="zone table of a site set as JSON")
    p.add_argument("--points", default=None)
    p.add_argument("--inline", default=None)
    p.add_argument("--box-lo", required=True, help="JSON vector")
    p.add_argument("--box-hi", required=True, help="JSON vector")
    p.add_argument("--probes", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tie-tolerance", type=float, default=1e-9)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_zones)

    p = sub.add_parser("mag", help="particle system build + solve + analysis")
    p.add_argument("--base", required=True, help="JSON base points, m rows of n coords")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--start", required=True, help="JSON lifted start configuration")
    p.add_argument("--end", required=True, help="JSON lifted end configuration")
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--mesh", type=int, default=512)
    p.add_argument("--refinements", type=int, default=3)
    p.add_argument("--starts", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_mag)

    p = sub.add_parser("stability", help="solve a sequence of scenarios")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_stability)

    p = sub.add_parser("preset", help=f"run a named preset: {', '.join(PRESET_NAMES)}")
    p.add_argument("name", choices=list(PRESET_NAMES))
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_preset)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GeometryError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
