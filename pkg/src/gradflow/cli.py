"""Command-line front end: config resolution, experiment sweeps, artifacts.

Each invocation resolves its configuration (built-in defaults, then an
optional JSON file, then explicit flags), validates it, and writes all of its
outputs into one fresh directory named after a hash of that configuration.
Identical configuration and seed therefore land in the same place with
byte-identical CSV files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .diagnostics import (SPACE_SWEEP_DT, ErrorRecord, compute_errors, eoc,
                          march_case, run_complexity_suite, write_energy_csv,
                          write_errors_csv, write_timing_csv)
from .forms import assemble_A
from .mesh import BcKind, build_rect_mesh
from .problems import CASES, get_case, random_field, swift_hohenberg
from .sav import energies
from .solvers import KrylovConfig, SolveFailure
from .space import DgSpace
from .steppers import (STRATEGIES, StepPlan, TraceRecord, attach_source,
                       identity_residual, initial_state, make_stepper)

_FLAG_KEYS = ("case", "k", "N", "dt", "T", "order", "strategy", "B", "seed",
              "out", "cg_tol", "parallel")

_DEFAULTS = {
    "accuracy-space": {
        "case": "ex5.1-periodic", "k": 1, "N": [8, 16, 32, 64], "dt": None,
        "T": 0.01, "order": 1, "strategy": "hybrid", "B": None, "seed": 0,
        "cg_tol": None, "parallel": False,
    },
    "accuracy-time": {
        "case": "ex5.2", "k": 2, "N": 64, "dt": [0.25, 0.125, 0.0625, 0.03125],
        "T": 2.0, "order": None, "strategy": "hybrid", "B": None, "seed": 0,
        "cg_tol": None, "parallel": False,
    },
    "complexity": {
        "case": "ex5.2", "k": 1, "N": [8, 16, 32, 64], "dt": 1e-2, "T": 0.1,
        "order": 1, "strategy": None, "B": None, "seed": 0,
        "cg_tol": None, "parallel": False,
    },
    "run": {
        "case": None, "k": 1, "N": 16, "dt": 1e-2, "T": None, "order": 1,
        "strategy": "hybrid", "B": None, "seed": 0, "cg_tol": None,
        "parallel": False, "epsilon": 0.3, "g": 0.0, "steps": 1000,
        "amplitude": 0.5, "snapshot_every": None,
        "domain": [[0.0, 2.0 * math.pi], [0.0, 2.0 * math.pi]],
        "bc": "periodic",
    },
}


def _fmt(x: float) -> str:
    return format(float(x), ".8e")


# ---------------------------------------------------------------------------
# configuration plumbing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradflow",
        description="Fourth-order gradient-flow solver: accuracy, energy, "
                    "and complexity experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, summary in (
            ("accuracy-space", "mesh-refinement error sweep against an exact solution"),
            ("accuracy-time", "step-size error sweep for both schemes"),
            ("complexity", "wall-clock scaling of the three first-order strategies"),
            ("run", "free energy-dissipation run with CSV traces and snapshots")):
        p = sub.add_parser(name, help=summary)
        p.add_argument("--config", type=Path, default=None,
                       help="JSON file of settings; explicit flags win")
        p.add_argument("--case", default=None,
                       help=f"benchmark name, one of {sorted(CASES)}")
        p.add_argument("--k", type=int, default=None, choices=(1, 2, 3),
                       help="polynomial degree per axis")
        p.add_argument("--N", type=int, nargs="+", default=None,
                       help="cells per axis (several values form a sweep)")
        p.add_argument("--dt", type=float, nargs="+", default=None,
                       help="time step (several values form a sweep)")
        p.add_argument("--T", type=float, default=None, help="final time")
        p.add_argument("--order", type=int, default=None, choices=(1, 2),
                       help="scheme order in time")
        p.add_argument("--strategy", default=None, choices=STRATEGIES,
                       help="first-order solve strategy")
        p.add_argument("--B", type=float, default=None,
                       help="override the auxiliary-variable shift constant")
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed for random initial data")
        p.add_argument("--out", type=Path, default=None,
                       help="output root (default: $GRADFLOW_OUT or ./gradflow-out)")
        p.add_argument("--cg-tol", dest="cg_tol", type=float, default=None,
                       help="relative tolerance for the iterative solvers")
        p.add_argument("--parallel", action="store_const", const=True,
                       default=None,
                       help="run independent sweep points concurrently")
    return parser


def _resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(_DEFAULTS[args.command])
    if args.config is not None:
        with open(args.config) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise SystemExit("config file must hold a JSON object")
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise SystemExit(f"unknown config keys for {args.command}: {sorted(unknown)}")
        cfg.update(loaded)
    for key in _FLAG_KEYS:
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    cfg["command"] = args.command
    return cfg


def _scalar(cfg: dict, key: str):
    """Collapse a one-element flag list where the command needs a scalar."""
    val = cfg[key]
    if isinstance(val, (list, tuple)):
        if len(val) != 1:
            raise SystemExit(f"{cfg['command']} takes a single --{key} value")
        return val[0]
    return val


def _as_list(val):
    return list(val) if isinstance(val, (list, tuple)) else [val]


def _validate(cfg: dict) -> None:
    if cfg.get("order") == 2 and cfg.get("strategy") not in (None, "hybrid"):
        raise SystemExit("order 2 is only available with the hybrid strategy")
    for key in ("dt", "T"):
        for v in _as_list(cfg.get(key)):
            if v is not None and not v > 0.0:
                raise SystemExit(f"--{key} must be positive")
    for v in _as_list(cfg.get("N")):
        if v is not None and (not isinstance(v, int) or v < 1):
            raise SystemExit("--N must be a positive integer")
    if cfg.get("cg_tol") is not None and not cfg["cg_tol"] > 0.0:
        raise SystemExit("--cg-tol must be positive")


def _krylov(cfg: dict) -> KrylovConfig:
    if cfg.get("cg_tol") is not None:
        return KrylovConfig(rel_tol=cfg["cg_tol"])
    return KrylovConfig()


def _load_case(name: str, B: float | None):
    case = get_case(name)
    if B is not None:
        case = replace(case, model=replace(case.model, B=B))
    return case


def _out_dir(cfg: dict) -> Path:
    if cfg.get("out") is not None:
        root = Path(cfg["out"])
    else:
        root = Path(os.environ.get("GRADFLOW_OUT", "gradflow-out"))
    digest_src = {k: v for k, v in cfg.items() if k != "out"}
    digest = hashlib.sha256(
        json.dumps(digest_src, sort_keys=True, default=str).encode()).hexdigest()[:10]
    path = root / f"{cfg['command']}-{digest}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _echo_config(cfg: dict, out_dir: Path) -> None:
    doc = {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}
    with open(out_dir / "config.json", "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# sweep workers (top level so process pools can import them)


def _error_point(params):
    case_name, B, k, n, dt, T, order, strategy, cg_tol = params
    case = _load_case(case_name, B)
    krylov = KrylovConfig(rel_tol=cg_tol) if cg_tol is not None else KrylovConfig()
    state = march_case(case, k, n, dt, T, order=order, strategy=strategy,
                       krylov=krylov)
    return compute_errors(state.u, case.exact, state.t)


def _map_points(points, parallel: bool):
    if parallel and len(points) > 1:
        with ProcessPoolExecutor() as pool:
            return list(pool.map(_error_point, points))
    return [_error_point(p) for p in points]


# ---------------------------------------------------------------------------
# subcommands


def cmd_accuracy_space(cfg: dict) -> int:
    case_name = cfg["case"]
    if case_name is None:
        raise SystemExit("accuracy-space needs a --case with an exact solution")
    k = cfg["k"]
    n_list = sorted(_as_list(cfg["N"]))
    dt = _scalar(cfg, "dt") if cfg["dt"] is not None else SPACE_SWEEP_DT[k]
    cfg["dt"] = dt
    T = cfg["T"]
    order = cfg["order"] or 1

    for a, b in zip(n_list, n_list[1:]):
        if b != 2 * a:
            raise SystemExit(f"--N sweep must double per level, got {a} then {b}")

    out_dir = _out_dir(cfg)
    points = [(case_name, cfg["B"], k, n, dt, T, order, cfg["strategy"],
               cfg["cg_tol"]) for n in n_list]
    results = _map_points(points, cfg["parallel"])
    records = [ErrorRecord(k, n, dt, T, l2, linf)
               for n, (l2, linf) in zip(n_list, results)]
    if len(records) > 1:
        o2 = eoc([r.l2 for r in records], "spatial", steps=n_list)
        oi = eoc([r.linf for r in records], "spatial", steps=n_list)
        for rec, a, b in zip(records[1:], o2, oi):
            rec.eoc_l2, rec.eoc_linf = a, b
    write_errors_csv(out_dir / "errors.csv", records)
    _echo_config(cfg, out_dir)
    print(f"wrote {out_dir / 'errors.csv'}")
    return 0


def cmd_accuracy_time(cfg: dict) -> int:
    case_name = cfg["case"]
    if case_name is None:
        raise SystemExit("accuracy-time needs a --case with an exact solution")
    k = cfg["k"]
    n = _scalar(cfg, "N")
    dt_list = sorted(_as_list(cfg["dt"]), reverse=True)
    T = cfg["T"]
    orders = (1, 2) if cfg["order"] is None else (cfg["order"],)
    for a, b in zip(dt_list, dt_list[1:]):
        if not math.isclose(a / b, 2.0, rel_tol=1e-9):
            raise SystemExit(f"--dt sweep must halve per level, got {a} then {b}")

    out_dir = _out_dir(cfg)
    records: list[ErrorRecord] = []
    for order in orders:
        strategy = cfg["strategy"] if order == 1 else "hybrid"
        points = [(case_name, cfg["B"], k, n, dt, T, order, strategy,
                   cfg["cg_tol"]) for dt in dt_list]
        results = _map_points(points, cfg["parallel"])
        block = [ErrorRecord(k, n, dt, T, l2, linf, scheme_order=order)
                 for dt, (l2, linf) in zip(dt_list, results)]
        if len(block) > 1:
            o2 = eoc([r.l2 for r in block], "temporal", steps=dt_list)
            oi = eoc([r.linf for r in block], "temporal", steps=dt_list)
            for rec, a, b in zip(block[1:], o2, oi):
                rec.eoc_l2, rec.eoc_linf = a, b
        records.extend(block)
    write_errors_csv(out_dir / "errors.csv", records)
    _echo_config(cfg, out_dir)
    print(f"wrote {out_dir / 'errors.csv'}")
    return 0


def cmd_complexity(cfg: dict) -> int:
    strategies = STRATEGIES if cfg["strategy"] is None else (cfg["strategy"],)
    n_list = sorted(_as_list(cfg["N"]))
    dt = _scalar(cfg, "dt")
    case = _load_case(cfg["case"], cfg["B"])

    out_dir = _out_dir(cfg)
    records = run_complexity_suite(strategies, n_list, dt=dt, T=cfg["T"],
                                   degree=cfg["k"], krylov=_krylov(cfg),
                                   case=case)
    write_timing_csv(out_dir / "timing.csv", records)
    _echo_config(cfg, out_dir)
    print(f"wrote {out_dir / 'timing.csv'}")
    return 0


def _write_snapshot(path: Path, field) -> None:
    """Point-cloud CSV: sampled values on the per-cell uniform lattice."""
    space = DgSpace.get(field.mesh, field.degree)
    ref = np.linspace(-1.0, 1.0, field.degree + 2)
    vals = space.lattice_values(field.coeffs, ref)
    pts = space.lattice_points(ref)
    with open(path, "w", newline="") as fh:
        if field.mesh.dim == 1:
            fh.write("x,u\n")
            X = np.broadcast_to(pts[0], vals.shape)
            for x, u in zip(X.ravel(), vals.ravel()):
                fh.write(f"{_fmt(x)},{_fmt(u)}\n")
        else:
            fh.write("x,y,u\n")
            X = np.broadcast_to(pts[0], vals.shape)
            Y = np.broadcast_to(pts[1], vals.shape)
            for x, y, u in zip(X.ravel(), Y.ravel(), vals.ravel()):
                fh.write(f"{_fmt(x)},{_fmt(y)},{_fmt(u)}\n")


def cmd_run(cfg: dict) -> int:
    k = cfg["k"]
    n = _scalar(cfg, "N")
    dt = _scalar(cfg, "dt")
    if cfg["T"] is not None:
        n_steps = int(round(cfg["T"] / dt))
        if not math.isclose(n_steps * dt, cfg["T"], rel_tol=1e-9, abs_tol=1e-12):
            raise SystemExit("T must be an integer multiple of dt")
    else:
        n_steps = int(cfg["steps"])
    if n_steps < 0:
        raise SystemExit("step count must be nonnegative")

    if cfg["case"] is not None:
        case = _load_case(cfg["case"], cfg["B"])
        model = case.model
        mesh = case.build_mesh(n)
        space = DgSpace.get(mesh, k)
        u0 = space.project(case.initial)
        source = case.source
    else:
        bc = {"periodic": BcKind.PERIODIC,
              "neumann-free": BcKind.NEUMANN_FREE}.get(cfg["bc"])
        if bc is None:
            raise SystemExit("bc must be 'periodic' or 'neumann-free'")
        model = swift_hohenberg(cfg["epsilon"], cfg["g"], bc_kind=bc, B=cfg["B"])
        domain = tuple(tuple(map(float, ax)) for ax in cfg["domain"])
        mesh = build_rect_mesh(domain, n, bc)
        amp = float(cfg["amplitude"])
        u0 = random_field(mesh, k, cfg["seed"], low=-amp, high=amp)
        source = None

    A_op = assemble_A(mesh, k, model.a)
    plan = StepPlan(dt=dt, order=cfg["order"] or 1, strategy=cfg["strategy"],
                    krylov=_krylov(cfg))
    if source is not None:
        plan = attach_source(plan, source)
    stepper = make_stepper(plan, model, A_op)

    every = cfg["snapshot_every"]
    if every is None:
        every = max(n_steps // 10, 1)
    every = int(every)

    out_dir = _out_dir(cfg)
    _echo_config(cfg, out_dir)
    state = initial_state(u0, model, A_op)
    e = energies(state, model)
    trace = [TraceRecord(0, state.t, e.original, e.modified, state.r, 0.0, 0)]
    _write_snapshot(out_dir / "snapshot_000000.csv", state.u)
    code = 0
    try:
        for step in range(1, n_steps + 1):
            new, info = stepper.step(state)
            e = energies(new, model)
            res = identity_residual(state, new, plan.order, plan.dt)
            trace.append(TraceRecord(step, new.t, e.original, e.modified,
                                     new.r, res, info.iterations))
            state = new
            if step % every == 0 or step == n_steps:
                _write_snapshot(out_dir / f"snapshot_{step:06d}.csv", state.u)
    except SolveFailure as exc:
        print(f"aborted at step {len(trace)}: {exc}", file=sys.stderr)
        code = 1
    write_energy_csv(out_dir / "energy.csv", trace)
    print(f"wrote {out_dir / 'energy.csv'} ({len(trace) - 1} steps)")
    return code


_COMMANDS = {
    "accuracy-space": cmd_accuracy_space,
    "accuracy-time": cmd_accuracy_time,
    "complexity": cmd_complexity,
    "run": cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = _resolve_config(args)
    _validate(cfg)
    try:
        return _COMMANDS[args.command](cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
