"""Command-line front end: ``lpv-rci {generate,synthesize,verify,study}``.

Exit codes: 0 success, 2 configuration error, 3 uninformative data,
4 solver infeasible or failed, 5 verification violation.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, verify
from .datamatrices import build, informativity
from .presets import Setup, load_setup
from .solvers import BACKENDS, BackendUnavailable, SolverOptions
from .synthesis import (InformativityError, SynthesisConfig, SynthesisError, SynthesisInfeasible,
                        SynthesisResult, synthesize)
from .trajectory import ConfigError, TrajectoryError, load_trajectory, save_trajectory

logger = logging.getLogger("lpv_rci")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFORMATIVITY = 3
EXIT_INFEASIBLE = 4
EXIT_VIOLATION = 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def plant_hash(setup: Setup) -> str:
    payload = json.dumps({"plant": setup.config.get("plant"),
                          "constraints": setup.config.get("constraints")},
                         sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}", EXIT_CONFIG) from None
    return out


def solver_options(name: str | None) -> SolverOptions:
    """``--solver`` accepts a backend (``cvxpy``, ``sdpa-file``, ``sdpa``), a cvxpy
    solver name (``clarabel``, ``scs``) or ``backend:SOLVER``."""
    if name is None:
        opts = SolverOptions.from_env()
    else:
        backend, sep, solver = name.partition(":")
        if backend.lower() in BACKENDS:
            opts = SolverOptions(backend=backend.lower())
            if sep:
                opts.solver = solver.upper()
        elif not sep:
            opts = SolverOptions(backend="cvxpy", solver=name.upper())
        else:
            raise CliError(f"unknown solver backend {backend!r}", EXIT_CONFIG)
    if opts.backend not in BACKENDS:
        raise CliError(f"unknown solver backend {opts.backend!r}", EXIT_CONFIG)
    if opts.backend in ("cvxpy", "sdpa-file"):
        import cvxpy as cp

        if opts.solver not in cp.installed_solvers():
            raise CliError(f"unknown or unavailable solver {opts.solver!r}; installed: "
                           f"{', '.join(cp.installed_solvers())}", EXIT_CONFIG)
    return opts


def _setup(args) -> Setup:
    try:
        return load_setup(args.config)
    except (ConfigError, ValueError) as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None


def _trajectory(args, setup: Setup):
    if getattr(args, "trajectory", None):
        try:
            return load_trajectory(args.trajectory)
        except FileNotFoundError:
            raise CliError(f"trajectory file not found: {args.trajectory}", EXIT_CONFIG) from None
        except TrajectoryError as exc:
            raise CliError(f"{args.trajectory}: {exc}", EXIT_CONFIG) from None
    T = getattr(args, "T", None)
    if T is not None and T < 1:
        raise CliError("T must be at least 1", EXIT_CONFIG)
    try:
        return setup.collect(T=T, seed=args.seed)
    except (ConfigError, TrajectoryError) as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None


def _synthesis_config(args, setup: Setup) -> SynthesisConfig:
    syn = setup.config.get("synthesis", {})
    try:
        C = setup.C(args.nc)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    max_iters = args.max_iters if args.max_iters is not None else syn.get("max_iters", 5)
    if max_iters < 1:
        raise CliError("--max-iters must be at least 1", EXIT_CONFIG)
    return SynthesisConfig(
        C=C, constraints=setup.constraints, max_iters=max_iters,
        rel_vol_tol=syn.get("rel_vol_tol", 1e-3) if args.rel_vol_tol is None else args.rel_vol_tol,
        solver=solver_options(args.solver),
        allow_uninformative=getattr(args, "allow_uninformative", False),
    )


def _provenance(args, setup: Setup, **extra) -> dict:
    return {"version": __version__, "command": args.command, "seed": args.seed,
            "config": str(args.config) if args.config else "double_integrator",
            "plant_sha256": plant_hash(setup), **extra}


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    if args.T is not None and args.T < 1:
        raise CliError("T must be at least 1", EXIT_CONFIG)
    setup = _setup(args)
    out = _out_dir(args)
    traj = _trajectory(args, setup)
    save_trajectory(traj, out / "trajectory.csv")
    _write_json(out / "provenance.json", _provenance(args, setup, T=traj.T))
    print(f"wrote {out / 'trajectory.csv'} (T={traj.T}, {traj.T + 1} states)")
    return EXIT_OK


def _run_synthesis(args, setup: Setup, traj) -> SynthesisResult:
    cfg = _synthesis_config(args, setup)
    dm = build(traj, setup.constraints)
    try:
        return synthesize(dm, cfg)
    except InformativityError as exc:
        raise CliError(f"{exc} (rank condition on the data matrix [p kron x; u] not met; "
                       "collect more or richer data, or pass --allow-uninformative)",
                       EXIT_INFORMATIVITY) from None
    except SynthesisInfeasible as exc:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        exc.program.dump_json(out / "infeasible_program.json")
        raise CliError(f"{exc}; program written to {out / 'infeasible_program.json'}",
                       EXIT_INFEASIBLE) from None
    except BackendUnavailable as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    except SynthesisError as exc:
        raise CliError(str(exc), EXIT_INFEASIBLE) from None


def cmd_synthesize(args) -> int:
    setup = _setup(args)
    out = _out_dir(args)
    traj = _trajectory(args, setup)
    result = _run_synthesis(args, setup, traj)
    if not args.trajectory:
        save_trajectory(traj, out / "trajectory.csv")
    result.save_json(out / "result.json")
    np.savetxt(out / "set_vertices.csv", result.set_vertices(), delimiter=",",
               header="x1,x2" if result.n == 2 else ",".join(f"x{i + 1}" for i in range(result.n)),
               comments="")
    with open(out / "volume_history.csv", "w") as fh:
        fh.write("iteration,volume\n")
        for q, v in enumerate(result.volume_history):
            fh.write(f"{q + 1},{v!r}\n")
    _write_json(out / "provenance.json", _provenance(args, setup, T=traj.T, nc=result.C.shape[0]))
    certified = all(rec.certificate.get("passed", False) for rec in result.iterations)
    print(f"status {result.status}; volume {result.volume:.4f} after "
          f"{len(result.volume_history)} iteration(s); certified={certified}")
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if not certified or result.status in ("solver-failure", "volume-dip"):
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_verify(args) -> int:
    setup = _setup(args)
    out = _out_dir(args)
    try:
        result = SynthesisResult.load_json(args.result)
    except FileNotFoundError:
        raise CliError(f"result file not found: {args.result}", EXIT_CONFIG) from None
    cs = setup.constraints
    cont = verify.containment(result, cs)
    vert = mc = dec = None
    if setup.plant is not None:
        vert = verify.vertex_invariance(result, setup.plant.M, cs)
        dec = verify.vertex_decomposition(result.W, result.N, setup.plant.M, result.theta_vertices,
                                        cs.scheduling_vertices, cs.H_w, seed=args.seed)
    K_list = [np.zeros_like(K) for K in result.K_list] if args.zero_gain else None
    if args.mode == "sampled":
        traj = _trajectory(args, setup)
        mc = verify.monte_carlo_invariance(result, cs, dm=build(traj, cs), trials=args.trials,
                                           horizon=args.horizon, seed=args.seed, K_list=K_list,
                                           record=True)
    elif setup.plant is not None:
        mc = verify.monte_carlo_invariance(result, cs, plant=setup.plant, trials=args.trials,
                                           horizon=args.horizon, seed=args.seed, K_list=K_list,
                                           init=args.init, disturbances=not args.no_disturbance,
                                           record=True)
    report = verify.VerificationReport(cont, vert, mc, dec)
    _write_json(out / "report.json", report.to_dict())
    if mc is not None and mc.trajectories:
        with open(out / "trajectories.csv", "w") as fh:
            n = result.n
            fh.write("trial,step," + ",".join(f"x{i + 1}" for i in range(n)) + "\n")
            for t, path in enumerate(mc.trajectories):
                for k, x in enumerate(path):
                    fh.write(f"{t},{k}," + ",".join(repr(float(v)) for v in x) + "\n")
        _write_json(out / "plot_data.json", {
            "set_vertices": result.set_vertices().tolist(),
            "state_constraints": {"H_x": cs.H_x.tolist()},
            "trajectories": [p.tolist() for p in mc.trajectories[:len(result.theta_vertices)]],
        })
    print(f"containment {'ok' if cont.passed else 'VIOLATED'} "
          f"(state {cont.state_max:.6f}, input {cont.input_max:.6f})")
    if vert is not None:
        print(f"vertex check {'ok' if vert.passed else 'VIOLATED'} "
              f"(max {vert.max_norm:.6f} over {vert.evaluations} evaluations)")
    if mc is not None:
        print(f"monte carlo ({mc.mode}) {'ok' if mc.passed else 'VIOLATED'}: "
              f"{mc.violating_trials}/{mc.trials} violating trials, max {mc.max_norm:.6f}")
    if dec is not None:
        print(f"vertex decomposition {'ok' if dec.passed else 'FAILED'} (error {dec.max_error:.2e})")
    return EXIT_OK if report.passed else EXIT_VIOLATION


def cmd_study(args) -> int:
    setup = _setup(args)
    out = _out_dir(args)
    T_list = args.T_list or setup.config.get("study", {}).get("T_list", [20, 50, 100, 200])
    if any(T < 1 for T in T_list):
        raise CliError("all T values must be at least 1", EXIT_CONFIG)
    cfg = _synthesis_config(args, setup)
    args.T = max(T_list)
    traj = _trajectory(args, setup)
    table = verify.volume_vs_T(traj, T_list, cfg)
    table.to_csv(out / "volume_vs_T.csv")
    # per-iteration volumes at the first T
    dm = build(traj.prefix(T_list[0]), setup.constraints)
    iter_rows = []
    if informativity(dm, setup.constraints).bounded:
        try:
            res = synthesize(dm, cfg)
            iter_rows = list(enumerate(res.volume_history, start=1))
        except SynthesisError as exc:
            logger.warning("iteration study failed: %s", exc)
    with open(out / "volume_vs_iterations.csv", "w") as fh:
        fh.write("iteration,volume\n")
        for q, v in iter_rows:
            fh.write(f"{q},{v!r}\n")
    summary = table.to_dict()
    if len(table.rows) < 2:
        summary["trend_ok"] = None
    _write_json(out / "study.json", {**summary, "volume_vs_iterations": [v for _, v in iter_rows],
                                     "provenance": _provenance(args, setup, T_list=T_list)})
    for r in table.rows:
        vol = "-" if r.volume is None else f"{r.volume:.4f}"
        print(f"T={r.T:5d} rank={r.rank} volume={vol} status={r.status}")
    if len(table.rows) > 1:
        print(f"trend {'ok' if table.trend_ok else 'NOT monotone'} (slack {table.slack:.0%})")
        if not table.trend_ok:
            return EXIT_VIOLATION
    if any(r.volume is None for r in table.rows):
        return EXIT_INFEASIBLE
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpv-rci", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None,
                        help="JSON config path or bundled name (default: double_integrator)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    synth = argparse.ArgumentParser(add_help=False)
    synth.add_argument("--solver", default=None,
                       help="backend or solver: cvxpy, sdpa-file, sdpa, clarabel, scs, backend:SOLVER "
                            "(default from RCI_SOLVER, else cvxpy:CLARABEL)")
    synth.add_argument("--nc", type=int, default=None, help="select a bundled C preset by row count")
    synth.add_argument("--max-iters", type=int, default=None)
    synth.add_argument("--rel-vol-tol", type=float, default=None)

    sub = parser.add_subparsers(dest="command", required=True)
    g = sub.add_parser("generate", parents=[common], help="simulate an excitation experiment")
    g.add_argument("--T", type=int, default=None, help="number of samples")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("synthesize", parents=[common, synth], help="compute S and K from data")
    s.add_argument("--trajectory", default=None, help="CSV trajectory (default: generate)")
    s.add_argument("--T", type=int, default=None, help="samples to generate without --trajectory")
    s.add_argument("--allow-uninformative", action="store_true")
    s.set_defaults(func=cmd_synthesize)

    v = sub.add_parser("verify", parents=[common], help="check a result by simulation")
    v.add_argument("--result", required=True, help="result.json from synthesize")
    v.add_argument("--trials", type=int, default=500)
    v.add_argument("--horizon", type=int, default=50)
    v.add_argument("--mode", choices=["true", "sampled"], default="true")
    v.add_argument("--init", choices=["vertices", "boundary"], default="vertices")
    v.add_argument("--trajectory", default=None, help="data for sampled-model mode")
    v.add_argument("--T", type=int, default=None)
    v.add_argument("--zero-gain", action="store_true", help="negative control with K = 0")
    v.add_argument("--no-disturbance", action="store_true")
    v.set_defaults(func=cmd_verify)

    st = sub.add_parser("study", parents=[common, synth], help="volume versus data length")
    st.add_argument("--T-list", type=int, nargs="+", default=None)
    st.add_argument("--trajectory", default=None)
    st.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
