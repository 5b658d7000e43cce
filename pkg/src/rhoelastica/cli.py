"""Command-line interface.

Subcommands: ``classify``, ``predict``, ``solve``, ``continue``, ``render``
and ``verify``. Exit codes are 0 on success, 1 on usage or configuration
errors, 2 on solver failures and 3 on verification failures. The output
directory can be overridden with the ``RHOELASTICA_OUTPUT_DIR`` variable.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bifurcation import Case, DegenerateModeError, classify, criticality_region, first_bifurcating_case
from .config import OUTPUT_ENV, PRESETS, ConfigError, RunConfig, load_config
from .continuation import (
    Branch,
    CollapsedToTrivialError,
    ContinuationOptions,
    continue_branch,
    start_branch,
)
from .discretization import DiscreteState, Grid, StiffnessFloorError, discrete_energy, load_state, save_state
from .model import ModelParams
from .perturbation import predictor
from .render import write_svg
from .solver import NewtonOptions, SingularSystemError, newton_solve, phase_condition_from
from .verify import faulty_jacobian, run_verification

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(record) -> None:
    print(json.dumps(record, sort_keys=False))


def _newton_options(cfg: RunConfig) -> NewtonOptions:
    return NewtonOptions(tol_residual=cfg.tol, max_iters=cfg.max_iters, min_eta=cfg.min_eta,
                         backtrack_factor=cfg.backtrack)


def _targets(cfg: RunConfig):
    """Bifurcation records the config asks for."""
    modes = cfg.mode_numbers()
    if modes is None:
        return [first_bifurcating_case(cfg.m, cfg.h)]
    return [classify(cfg.m, cfg.h, j) for j in modes]


def _ensure_real(info) -> None:
    if info.case not in (Case.CASE0, Case.CASE1_0, Case.CASE1_1) or not info.mu0 > 0.0:
        raise UsageError(f"mode j={info.j} has no usable bifurcation ({info.case.value}, mu0={info.mu0})")


# --- subcommands ---------------------------------------------------------


def cmd_classify(cfg: RunConfig) -> int:
    for j in range(1, cfg.j_max + 1):
        try:
            rec = classify(cfg.m, cfg.h, j).to_record()
        except DegenerateModeError as exc:
            rec = {"j": j, "case": "degenerate", "error": str(exc)}
        _emit({"kind": "mode", **rec})
    lead = first_bifurcating_case(cfg.m, cfg.h)
    _emit({"kind": "first", **lead.to_record()})
    _emit({"kind": "region", "m": cfg.m, "h": cfg.h, "region": criticality_region(cfg.m, cfg.h)})
    return EXIT_OK


def cmd_predict(cfg: RunConfig, amplitude: float | None) -> int:
    out = cfg.output_dir
    grid = Grid(cfg.n)
    params = ModelParams(cfg.m, cfg.h, 1.0)
    A = cfg.A0 if amplitude is None else amplitude
    for info in _targets(cfg):
        _ensure_real(info)
        state, mu = predictor(info, params, A, cfg.order, grid)
        path = save_state(out / f"predict_{info.case.value}_j{info.j}.json", state, params.with_mu(max(mu, 0.0)),
                          extra={"j": info.j, "case": info.case.value, "A": A, "order": cfg.order})
        _emit({"kind": "predict", "j": info.j, "case": info.case.value, "mu": mu, "A": A, "path": str(path)})
    return EXIT_OK


def cmd_solve(cfg: RunConfig, init: str, state_file: str | None, phase: bool) -> int:
    out = cfg.output_dir
    if state_file is not None:
        initial, params = load_state(state_file)
        params = ModelParams(cfg.m, cfg.h, params.mu) if cfg.mu is None else ModelParams(cfg.m, cfg.h, cfg.mu)
        j = None
    else:
        params = ModelParams(cfg.m, cfg.h, 1.0)
        grid = Grid(cfg.n)
        if init == "trivial":
            if cfg.mu is None:
                raise UsageError("mu: required when solving from the trivial state")
            initial, j = DiscreteState.trivial(grid, params), None
            params = params.with_mu(cfg.mu)
        else:
            info = _targets(cfg)[0]
            _ensure_real(info)
            initial, mu = predictor(info, params, cfg.A0, cfg.order, grid)
            params = params.with_mu(mu if cfg.mu is None else cfg.mu)
            j = info.j
    cond = phase_condition_from(initial.rho) if phase and np.ptp(initial.rho) > 0 else None
    result = newton_solve(initial, params, _newton_options(cfg), phase=cond)
    record = {"kind": "solve", "mu": params.mu, **result.to_record(),
              "energy": discrete_energy(result.state, params)}
    name = "solve" if j is None else f"solve_j{j}"
    save_state(out / f"{name}.json", result.state, params, extra={} if j is None else {"j": j})
    (out / f"{name}_result.json").write_text(json.dumps(record) + "\n")
    _emit(record)
    return EXIT_OK if result.converged else EXIT_SOLVER


def _branch_job(args) -> tuple[dict, str | None]:
    """Run one branch; returns its summary and an error string."""
    cfg, info_record = args
    from .bifurcation import BifurcationInfo

    info = BifurcationInfo.from_record(info_record)
    out = cfg.output_dir
    label = f"{info.case.value}_j{info.j}"
    params = ModelParams(cfg.m, cfg.h, 1.0)
    opts = ContinuationOptions(
        step=cfg.step, max_points=cfg.max_points, mu_range=(cfg.mu_min, cfg.mu_max),
        newton=_newton_options(cfg), snapshot_every=cfg.snapshot_every,
        snapshot_dir=str(out / "snapshots"),
    )
    if not cfg.mu_min <= info.mu0 <= cfg.mu_max:
        Branch(label=label).write_csv(out / f"branch_{label}.csv")
        return {"label": label, "points": 0, "termination": "out_of_range", "mu0": info.mu0}, None
    try:
        seed = start_branch(info, params, Grid(cfg.n), cfg.A0, opts)
    except CollapsedToTrivialError as exc:
        return {"label": label, "points": 0, "termination": "collapsed"}, str(exc)
    except (StiffnessFloorError, SingularSystemError, RuntimeError) as exc:
        return {"label": label, "points": 0, "termination": "start_failed"}, str(exc)
    branch = continue_branch(seed, params, opts, info=info, label=label)
    branch.write_csv(out / f"branch_{label}.csv")
    last = branch.points[-1]
    save_state(out / f"final_{label}.json", last.state, params.with_mu(last.mu),
               extra={"j": info.j, "case": info.case.value, "energy": last.energy})
    return {**branch.summary(), "mu0": info.mu0, "sigma": info.sigma}, None


def cmd_continue(cfg: RunConfig) -> int:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    targets = _targets(cfg)
    for info in targets:
        _ensure_real(info)
    jobs = [(cfg, info.to_record()) for info in targets]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_branch_job, jobs))
    else:
        results = [_branch_job(job) for job in jobs]
    summary = {"m": cfg.m, "h": cfg.h, "n": cfg.n, "branches": [r for r, _ in results]}
    errors = [e for _, e in results if e is not None]
    if errors:
        summary["errors"] = errors
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    for rec, err in results:
        _emit(rec if err is None else {**rec, "error": err})
        if rec.get("termination") == "out_of_range":
            print(f"mode {rec['label']}: critical value {rec['mu0']} is out of range", file=sys.stderr)
    return EXIT_SOLVER if errors else EXIT_OK


def cmd_render(cfg: RunConfig, state_file: str, svg: str | None) -> int:
    try:
        text = Path(state_file).read_text()
        extra = json.loads(text)
        state, params = load_state(state_file)
    except (OSError, ValueError) as exc:
        raise UsageError(f"unreadable state {state_file}: {exc}") from None
    energy = discrete_energy(state, params)
    j = extra.get("j")
    label = f"mu={params.mu:.6g}  E={energy:.8g}  (m, h)=({params.m:g}, {params.h:g})"
    if j is not None:
        label += f"  j={j}"
    target = Path(svg) if svg else cfg.output_dir / (Path(state_file).stem + ".svg")
    path = write_svg(target, state, params, base=cfg.stroke_base, scale=cfg.stroke_scale, label=label)
    _emit({"kind": "render", "path": str(path)})
    return EXIT_OK


def cmd_verify(level: int, report: str | None, fault: str | None) -> int:
    jac_fn = None
    if fault is not None:
        try:
            row, col, delta = fault.split(",")
            jac_fn = faulty_jacobian(int(row), int(col), float(delta))
        except ValueError:
            raise UsageError("--inject-fault expects ROW,COL,DELTA") from None
    result = run_verification(level) if jac_fn is None else run_verification(level, jac_fn)
    text = json.dumps(result, indent=1)
    if report:
        Path(report).parent.mkdir(parents=True, exist_ok=True)
        Path(report).write_text(text + "\n")
    print(text)
    return EXIT_OK if result["passed"] else EXIT_VERIFY


# --- entry point ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--preset", choices=sorted(PRESETS), help="named parameter set")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")

    parser = _Parser(prog="rhoelastica", description="Continuation of closed elastic curves with density-dependent stiffness.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("classify", parents=[common], help="bifurcation table for j = 1..j_max")
    p = sub.add_parser("predict", parents=[common], help="sample the perturbative predictor")
    p.add_argument("--amplitude", type=float, help="amplitude A (default A0)")
    p = sub.add_parser("solve", parents=[common], help="Newton solve at fixed mu")
    p.add_argument("--init", choices=["predictor", "trivial"], default="predictor")
    p.add_argument("--state", help="start from a saved state instead")
    p.add_argument("--phase", action="store_true", help="use the phase-fixed system")
    sub.add_parser("continue", parents=[common], help="follow branches and write CSV files")
    p = sub.add_parser("render", parents=[common], help="draw a state as SVG")
    p.add_argument("state", help="state JSON file")
    p.add_argument("-o", "--output", help="SVG path (default: output directory)")
    p = sub.add_parser("verify", help="run the self-verification suite")
    p.add_argument("--level", type=int, choices=[1, 2, 3], default=1)
    p.add_argument("--report", help="also write the JSON report here")
    p.add_argument("--inject-fault", metavar="ROW,COL,DELTA", help="corrupt one Jacobian entry")
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "verify":
            return cmd_verify(args.level, args.report, args.inject_fault)
        cfg = load_config(args.config, args.overrides, args.preset)
        if args.command == "classify":
            return cmd_classify(cfg)
        if args.command == "predict":
            return cmd_predict(cfg, args.amplitude)
        if args.command == "solve":
            return cmd_solve(cfg, args.init, args.state, args.phase)
        if args.command == "continue":
            return cmd_continue(cfg)
        return cmd_render(cfg, args.state, args.output)
    except (UsageError, ConfigError) as exc:
        print(f"rhoelastica: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StiffnessFloorError, SingularSystemError) as exc:
        print(f"rhoelastica: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
