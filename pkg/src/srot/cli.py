"""Command-line frontend: distances, flows, transport, interpolation, checks.

Every run that writes artifacts also writes a ``manifest.json`` echoing the
fully resolved configuration and the tool version, sufficient to re-run the
command.  Exit codes: 0 success, 2 bad configuration, 3 numerical failure
(with a diagnostic JSON on stdout).
"""

from __future__ import annotations

import argparse
import json
import sys as _sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .fileio import (
    fmt,
    frames_svg,
    read_measure,
    write_frames_csv,
    write_json,
    write_plan_csv,
)
from .flow import FlowBlowupError, PhasePoint, ham_flow, pmp_check, uniform_control_grid
from .kantorovich import DiscreteMeasure, cost_matrix, solve_kantorovich, support_slackness
from .monge import delta_potential, displacement_interpolation, potential_from_duals
from .shooting import ConnectError, ConnectOptions, connect, grushin_distance_origin
from .systems import is_two_generating, lie_bracket, make_system, validate_lagrangian

SYSTEM_CHOICES = ["grushin", "heisenberg", "euclidean2", "euclidean3"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved invocation: subcommand, system, inputs and numeric knobs."""

    subcommand: str
    system: str
    step: float
    tol: float
    grid_h: Optional[float]
    multistart: int
    seed: int
    out_dir: Optional[Path]
    inputs: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, v in (("step", self.step), ("tol", self.tol)):
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        if self.grid_h is not None and self.grid_h <= 0:
            raise ConfigError(f"grid spacing must be positive, got {self.grid_h}")
        if self.multistart < 1:
            raise ConfigError("multistart count must be >= 1")
        for key, p in self.inputs.items():
            if not Path(p).exists():
                raise ConfigError(f"input path for {key} does not exist: {p}")

    def manifest(self) -> dict:
        return {
            "spec_version": 1,
            "tool": "srot",
            "version": __version__,
            "subcommand": self.subcommand,
            "system": self.system,
            "step": self.step,
            "tol": self.tol,
            "grid_h": self.grid_h,
            "multistart": self.multistart,
            "seed": self.seed,
            "out_dir": str(self.out_dir) if self.out_dir else None,
            "inputs": {k: str(v) for k, v in self.inputs.items()},
            "options": _jsonable(self.options),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _parse_point(text: str, what: str = "point") -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what} {text!r}: {exc}") from exc


def _parse_times(text: str) -> list:
    ts = [float(v) for v in text.split(",")]
    if any(t < 0 or t > 1 for t in ts):
        raise ConfigError("times must lie in [0, 1]")
    return ts


def _parse_box_h(text: str):
    """Parse 'lo1:hi1,lo2:hi2,...,h' into (box array, spacing)."""
    parts = text.split(",")
    if len(parts) < 2:
        raise ConfigError(f"grid spec needs bounds and spacing: {text!r}")
    try:
        h = float(parts[-1])
        box = []
        for rng in parts[:-1]:
            lo, hi = rng.split(":")
            box.append((float(lo), float(hi)))
    except ValueError as exc:
        raise ConfigError(f"cannot parse grid spec {text!r}: {exc}") from exc
    box = np.asarray(box)
    if np.any(box[:, 1] <= box[:, 0]):
        raise ConfigError("grid bounds must satisfy lo < hi")
    return box, h


def _parse_table(text: str) -> np.ndarray:
    """Parse 'lo1:hi1:n1,lo2:hi2:n2' into a lattice of target points."""
    axes = []
    try:
        for rng in text.split(","):
            lo, hi, cnt = rng.split(":")
            axes.append(np.linspace(float(lo), float(hi), int(cnt)))
    except ValueError as exc:
        raise ConfigError(f"cannot parse table spec {text!r}: {exc}") from exc
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _resolve_backend(sys_spec, mu, nu, requested: str) -> str:
    if requested != "auto":
        return requested
    if sys_spec.name.startswith("euclidean"):
        return "closed-form"
    if sys_spec.name == "grushin" and (
        np.all(mu.points[:, 0] == 0.0) or np.all(nu.points[:, 0] == 0.0)
    ):
        return "closed-form"
    return "shooting"


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------


def _cmd_distance(cfg: RunConfig) -> dict:
    sys_spec = make_system(cfg.system)
    src = np.asarray(cfg.options["from"])
    opts = ConnectOptions(tol=cfg.tol, starts=cfg.multistart,
                          steps=int(round(1.0 / cfg.step)) if cfg.step < 1 else 250,
                          max_iter=cfg.options.get("max_iter", 60))
    results = {}
    if cfg.options.get("table") is not None:
        targets = cfg.options["table"]
        rows = []
        for tgt in targets:
            sol = connect(sys_spec, src, tgt, opts)
            rows.append((tgt, sol.distance, sol.cost))
        lines = [",".join([f"x{i+1}" for i in range(sys_spec.n)] + ["d", "d2"])]
        for tgt, d, d2 in rows:
            lines.append(",".join([fmt(v) for v in tgt] + [fmt(d), fmt(d2)]))
        results["table_csv"] = "\n".join(lines) + "\n"
        payload = {"targets": len(rows)}
    else:
        tgt = np.asarray(cfg.options["to"])
        if (
            sys_spec.name == "grushin"
            and src[0] == 0.0
            and cfg.options.get("closed_form_hint", True)
        ):
            d = grushin_distance_origin(tgt, delta=src[1])
            sol = connect(sys_spec, src, tgt, opts)
            # closed form is authoritative when available; the solver must agree
            payload = {"d": d, "d2": d * d, "shooting_d2": sol.cost,
                       "boundary_error": sol.boundary_error}
        else:
            sol = connect(sys_spec, src, tgt, opts)
            payload = {"d": sol.distance, "d2": sol.cost,
                       "boundary_error": sol.boundary_error}
    results["payload"] = payload
    return results


def _cmd_flow(cfg: RunConfig) -> dict:
    sys_spec = make_system(cfg.system)
    start = PhasePoint(cfg.options["x"], cfg.options["p"])
    traj = ham_flow(sys_spec, start, t_final=cfg.options["t_final"], step=cfg.step)
    n, k = sys_spec.n, sys_spec.k
    header = (
        ["t"]
        + [f"x{i+1}" for i in range(n)]
        + [f"p{i+1}" for i in range(n)]
        + [f"u{i+1}" for i in range(k)]
        + ["H"]
    )
    lines = [",".join(header)]
    for m in range(len(traj)):
        row = (
            [traj.times[m]]
            + list(traj.states[m])
            + list(traj.covectors[m])
            + list(traj.controls[m])
            + [traj.energy[m]]
        )
        lines.append(",".join(fmt(v) for v in row))
    return {
        "trajectory_csv": "\n".join(lines) + "\n",
        "payload": {
            "samples": len(traj),
            "endpoint": traj.endpoint.tolist(),
            "energy_drift": float(np.max(np.abs(traj.energy - traj.energy[0]))),
        },
    }


def _cmd_transport(cfg: RunConfig) -> dict:
    sys_spec = make_system(cfg.system)
    mu = read_measure(cfg.inputs["mu"])
    nu = read_measure(cfg.inputs["nu"])
    backend = _resolve_backend(sys_spec, mu, nu, cfg.options.get("backend", "auto"))
    c = cost_matrix(backend, sys_spec, mu, nu,
                    ConnectOptions(tol=cfg.tol, starts=cfg.multistart))
    plan, duals = solve_kantorovich(c, mu, nu)
    violations = support_slackness(plan, duals, c, tol=1e-8)
    return {
        "plan": plan,
        "payload": {
            "value": plan.value,
            "backend": backend,
            "dual_value": float(duals.f @ mu.weights + duals.g @ nu.weights),
            "slackness_violations": violations,
        },
        "duals_json": {
            "f": duals.f.tolist(),
            "g": duals.g.tolist(),
        },
    }


def _cmd_interpolate(cfg: RunConfig) -> dict:
    sys_spec = make_system(cfg.system)
    mu = read_measure(cfg.inputs["mu"])
    box, h = cfg.options["grid"]
    times = cfg.options["times"]
    backend = cfg.options.get("backend", "auto")
    if cfg.options.get("delta_target") is not None:
        target = cfg.options["delta_target"]
        fieldp = delta_potential(sys_spec, target, box, h, backend=backend)
    else:
        nu = read_measure(cfg.inputs["nu"])
        cb = _resolve_backend(sys_spec, mu, nu, backend)
        c = cost_matrix(cb, sys_spec, mu, nu,
                        ConnectOptions(tol=cfg.tol, starts=cfg.multistart))
        _, duals = solve_kantorovich(c, mu, nu)
        fieldp = potential_from_duals(sys_spec, nu, duals.g, box, h, backend=backend)
    frames = displacement_interpolation(sys_spec, fieldp, mu, times, step=cfg.step)
    return {
        "frames": frames,
        "payload": {
            "times": list(map(float, times)),
            "points": len(mu),
            "final_cloud": frames.clouds[-1].tolist(),
        },
    }


def _cmd_pmp_check(cfg: RunConfig) -> dict:
    sys_spec = make_system(cfg.system)
    start = PhasePoint(cfg.options["x"], cfg.options["p"])
    traj = ham_flow(sys_spec, start, t_final=cfg.options["t_final"], step=cfg.step)
    bound = cfg.options.get("grid_bound")
    if bound is None:
        bound = max(2.0, 1.2 * float(np.max(np.abs(traj.controls))))
    grid = uniform_control_grid(bound, cfg.options.get("grid_count", 41), sys_spec.k)
    rep = pmp_check(sys_spec, traj, grid, form=cfg.options.get("form", "max"))
    return {
        "payload": {
            "adjoint_residual": rep.adjoint_residual,
            "adjoint_slack": rep.adjoint_slack,
            "max_condition_residual": rep.max_condition_residual,
            "grid_slack": rep.grid_slack,
            "grid_resolution": rep.grid_resolution,
            "form": rep.form,
            "passed": rep.passed,
        }
    }


def _cmd_brackets(cfg: RunConfig) -> dict:
    sys_spec = make_system(cfg.system)
    x = cfg.options["at"]
    fields = sys_spec.fields_eval(np.asarray(x))
    brackets = {}
    for i in range(1, sys_spec.k + 1):
        for j in range(i + 1, sys_spec.k + 1):
            brackets[f"[X{i},X{j}]"] = lie_bracket(sys_spec, i, j, x).tolist()
    return {
        "payload": {
            "at": list(map(float, x)),
            "fields": fields.tolist(),
            "brackets": brackets,
            "two_generating": bool(is_two_generating(sys_spec, x)),
        }
    }


def _cmd_validate_lagrangian(cfg: RunConfig) -> dict:
    sys_spec = make_system(cfg.system)
    box = cfg.options["box"]
    rep = validate_lagrangian(sys_spec, box)
    return {
        "payload": {
            "passed": rep.passed,
            "conditions": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "worst_value": c.worst_value,
                    "witness_x": c.witness_x.tolist(),
                    "witness_u": c.witness_u.tolist(),
                    "detail": c.detail,
                }
                for c in rep.conditions
            ],
        }
    }


_COMMANDS = {
    "distance": _cmd_distance,
    "flow": _cmd_flow,
    "transport": _cmd_transport,
    "interpolate": _cmd_interpolate,
    "pmp-check": _cmd_pmp_check,
    "brackets": _cmd_brackets,
    "validate-lagrangian": _cmd_validate_lagrangian,
}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="srot",
        description="Optimal transport with optimal-control (sub-Riemannian) costs",
    )
    ap.add_argument("--version", action="version", version=f"srot {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common(p, system=True):
        if system:
            p.add_argument("--system", choices=SYSTEM_CHOICES, required=True)
        p.add_argument("--step", type=float, default=1e-3, help="integrator step")
        p.add_argument("--tol", type=float, default=1e-8, help="solver tolerance")
        p.add_argument("--multistart", type=int, default=16, help="shooting starts")
        p.add_argument("--seed", type=int, default=0, help="recorded in the manifest")
        p.add_argument("--out", type=Path, default=None, help="artifact directory")

    p = sub.add_parser("distance", help="sub-Riemannian distance between points")
    common(p)
    p.add_argument("--from", dest="src", required=True, help="source point x1,x2[,x3]")
    p.add_argument("--to", dest="dst", help="target point")
    p.add_argument("--table", help="target lattice lo:hi:n[,lo:hi:n...] -> CSV table")
    p.add_argument("--max-iter", type=int, default=60)

    p = sub.add_parser("flow", help="integrate the Hamiltonian flow, emit CSV")
    common(p)
    p.add_argument("--x", required=True, help="initial state")
    p.add_argument("--p", required=True, help="initial covector")
    p.add_argument("--t-final", type=float, default=1.0)

    p = sub.add_parser("transport", help="solve a discrete transport problem")
    common(p)
    p.add_argument("--mu", required=True, type=Path, help="source measure CSV/JSON")
    p.add_argument("--nu", required=True, type=Path, help="target measure CSV/JSON")
    p.add_argument("--backend", choices=["auto", "closed-form", "shooting"],
                   default="auto")

    p = sub.add_parser("interpolate", help="displacement interpolation frames + SVG")
    common(p)
    p.add_argument("--mu", required=True, type=Path)
    p.add_argument("--nu", type=Path, help="target measure (general problems)")
    p.add_argument("--delta-target", help="single target point x1,x2[,x3]")
    p.add_argument("--times", required=True, help="comma-separated times in [0,1]")
    p.add_argument("--grid", required=True,
                   help="potential grid: lo:hi,lo:hi,...,h (bounds per axis, spacing)")
    p.add_argument("--backend", choices=["auto", "closed-form", "shooting"],
                   default="auto")

    p = sub.add_parser("pmp-check", help="maximum-principle residuals along a flow")
    common(p)
    p.add_argument("--x", required=True)
    p.add_argument("--p", required=True)
    p.add_argument("--t-final", type=float, default=1.0)
    p.add_argument("--grid-bound", type=float, default=None)
    p.add_argument("--grid-count", type=int, default=41)
    p.add_argument("--form", choices=["max", "bolza_min"], default="max")

    p = sub.add_parser("brackets", help="frame, Lie brackets and spanning check")
    common(p)
    p.add_argument("--at", required=True, help="evaluation point")

    p = sub.add_parser("validate-lagrangian", help="running-cost regularity report")
    common(p)
    p.add_argument("--box", required=True, help="sample box lo:hi,lo:hi[,lo:hi]")

    return ap


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    inputs = {}
    options = {}
    sc = args.subcommand
    if sc == "distance":
        options["from"] = _parse_point(args.src, "--from")
        if args.table is not None:
            options["table"] = _parse_table(args.table)
        elif args.dst is not None:
            options["to"] = _parse_point(args.dst, "--to")
        else:
            raise ConfigError("distance needs --to or --table")
        options["max_iter"] = args.max_iter
    elif sc in ("flow", "pmp-check"):
        options["x"] = _parse_point(args.x, "--x")
        options["p"] = _parse_point(args.p, "--p")
        options["t_final"] = args.t_final
        if options["t_final"] <= 0:
            raise ConfigError("t-final must be positive")
        if sc == "pmp-check":
            options["grid_bound"] = args.grid_bound
            options["grid_count"] = args.grid_count
            options["form"] = args.form
            if args.grid_count < 2:
                raise ConfigError("grid-count must be >= 2")
    elif sc == "transport":
        inputs["mu"] = args.mu
        inputs["nu"] = args.nu
        options["backend"] = args.backend
    elif sc == "interpolate":
        inputs["mu"] = args.mu
        if (args.nu is None) == (args.delta_target is None):
            raise ConfigError("interpolate needs exactly one of --nu / --delta-target")
        if args.nu is not None:
            inputs["nu"] = args.nu
        else:
            options["delta_target"] = _parse_point(args.delta_target, "--delta-target")
        options["times"] = _parse_times(args.times)
        options["grid"] = _parse_box_h(args.grid)
        options["backend"] = args.backend
    elif sc == "brackets":
        options["at"] = _parse_point(args.at, "--at")
    elif sc == "validate-lagrangian":
        box, h = None, None
        parts = args.box.split(",")
        try:
            box = np.asarray([[float(v) for v in rng.split(":")] for rng in parts])
        except ValueError as exc:
            raise ConfigError(f"cannot parse box {args.box!r}") from exc
        options["box"] = box

    grid_h = options["grid"][1] if sc == "interpolate" else None
    return RunConfig(
        subcommand=sc,
        system=getattr(args, "system"),
        step=args.step,
        tol=args.tol,
        grid_h=grid_h,
        multistart=args.multistart,
        seed=args.seed,
        out_dir=args.out,
        inputs=inputs,
        options=options,
    )


def run(cfg: RunConfig) -> int:
    """Execute a resolved configuration; artifacts land in cfg.out_dir."""
    result = _COMMANDS[cfg.subcommand](cfg)
    payload = _jsonable(result.get("payload", {}))
    print(json.dumps(payload, indent=2, sort_keys=True))
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "manifest.json", cfg.manifest())
        write_json(out / "result.json", payload)
        if "table_csv" in result:
            (out / "table.csv").write_text(result["table_csv"])
        if "trajectory_csv" in result:
            (out / "trajectory.csv").write_text(result["trajectory_csv"])
        if "plan" in result:
            write_plan_csv(out / "plan.csv", result["plan"])
        if "duals_json" in result:
            write_json(out / "duals.json", result["duals_json"])
        if "frames" in result:
            write_frames_csv(out / "frames.csv", result["frames"])
            (out / "frames.svg").write_text(frames_svg(result["frames"]))
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except ConfigError as exc:
        print(json.dumps({"error": str(exc), "kind": "config"}), file=_sys.stderr)
        return 2
    try:
        return run(cfg)
    except ConfigError as exc:
        print(json.dumps({"error": str(exc), "kind": "config"}), file=_sys.stderr)
        return 2
    except (ConnectError, FlowBlowupError) as exc:
        print(json.dumps({"error": str(exc), "kind": "numerical",
                          "type": type(exc).__name__}, sort_keys=True))
        return 3
    except RuntimeError as exc:
        print(json.dumps({"error": str(exc), "kind": "numerical",
                          "type": type(exc).__name__}, sort_keys=True))
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
