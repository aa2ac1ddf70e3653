"""
CLI for weak KAM computations and graph verification.
"""

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from pipeline import artifacts
from pipeline.config_file import CurveSource, RunConfig, load_run_config
from pipeline.report_generator import ReportGenerator
from pipeline.report_io import write_report_jsonl
from run_logger import RunLogger
from wkam.errors import ErrorCode, WkamError
from wkam.events import EventLog
from wkam.fixtures import graph_field
from wkam.minplus import ActionKernel, load_or_assemble, save_kernel, system_fingerprint
from wkam.selector import selector_axiom_check
from wkam.systems import Family, energy_drift, flow_integrate, lagrangian_batch
from wkam.torus import PhasePoint, TorusGrid
from wkam.verifier import VerifierReport, build_selector, verify_birkhoff, verify_graph_field
from wkam.weakkam import BarrierResult, critical_value, peierls_barrier, solve_weak_kam

EVENTS_FILE = "run_events.jsonl"


class Session:
    """State shared by the steps of one command: config, outputs, logs and cached results."""

    def __init__(self, config: RunConfig, command: str, config_path: Optional[str]):
        self.config = config
        self.command = command
        self.out = config.output_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.event_log = EventLog()
        self.logger = RunLogger(str(self.out / EVENTS_FILE))
        self.logger.log_run_start(command, Path(config_path).name if config_path else None, config.n, config.d)
        self._kernel: Optional[ActionKernel] = None
        self._c: Optional[float] = None
        self.diagnostics = None

    def path(self, name: str) -> Path:
        return self.out / name

    def wrote(self, path: Path, kind: str) -> None:
        self.logger.log_artifact(path, kind)
        print(f"💾 Wrote {path}")

    def kernel(self) -> ActionKernel:
        if self._kernel is None:
            kc = self.config.kernel
            self._kernel = load_or_assemble(self.config.kernel_cache, self.config.spec, self.config.grid, kc.t,
                                            kc.winding, kc.substeps, kc.threads, self.event_log)
        return self._kernel

    def critical_value(self) -> float:
        if self._c is None:
            tol = self.config.verifier_config().k_c_tol
            self._c, self.diagnostics = critical_value(self.kernel(), self.config.spec, tol,
                                                      event_log=self.event_log)
        return self._c

    def barrier(self) -> BarrierResult:
        bc = self.config.barrier
        return peierls_barrier(self.kernel(), self.critical_value(), bc.tol, bc.window, bc.max_powers,
                               bc.aubry_tolerance(self.config.n), self.config.kernel.threads, self.event_log)

    def finish(self, exit_code: int, **summary) -> int:
        self.logger.log_diagnostics(self.event_log)
        self.logger.log_run_end(self.command, exit_code, summary)
        return exit_code


def cmd_legendre(session: Session, args) -> int:
    config = session.config
    grid = config.grid
    axis = np.linspace(-args.vmax, args.vmax, args.points)
    velocities = np.stack(np.meshgrid(*([axis] * grid.dim), indexing="ij"), axis=-1).reshape(-1, grid.dim)
    nodes = grid.nodes()
    q = np.repeat(nodes, velocities.shape[0], axis=0)
    v = np.tile(velocities, (grid.size, 1))
    lag, momenta = lagrangian_batch(config.spec, q, v)
    path = artifacts.write_legendre_csv(session.path("legendre.csv"), grid, velocities,
                                        lag.reshape(grid.size, -1), momenta.reshape(grid.size, -1, grid.dim))
    session.wrote(path, "legendre")
    print(f"✅ Tabulated L at {grid.size} nodes x {velocities.shape[0]} velocities")
    return session.finish(0, rows=int(lag.size))


def cmd_kernel(session: Session, args) -> int:
    K = session.kernel()
    session.wrote(artifacts.write_matrix_csv(session.path("kernel.csv"), K.entries), "kernel")
    cache = session.config.kernel_cache
    if cache is None:
        cache = session.path("kernel.bin")
        save_kernel(cache, K, system_fingerprint(session.config.spec))
    session.wrote(Path(cache), "kernel_cache")
    print(f"✅ Kernel n={K.grid.n} d={K.grid.dim} t={K.t} W={K.winding} m={K.substeps}")
    return session.finish(0, t=K.t, m=K.substeps)


def cmd_critical_value(session: Session, args) -> int:
    K = session.kernel()
    c = session.critical_value()
    diagnostics = session.diagnostics
    path = artifacts.write_critical_value_csv(session.path("critical_value.csv"), c, diagnostics.c_upper,
                                              diagnostics.cycle_mean, K.t, K.grid.n)
    session.wrote(path, "critical_value")
    print(f"c={c:.6f}")
    return session.finish(0, c=c)


def cmd_weak_kam(session: Session, args) -> int:
    sc = session.config.solver
    result = solve_weak_kam(session.kernel(), session.critical_value(), sc.tol, sc.base, sc.max_iter,
                            session.event_log)
    session.wrote(artifacts.write_weak_kam_csv(session.path("weak_kam.csv"), result), "weak_kam")
    if session.config.plot:
        session.wrote(artifacts.plot_weak_kam(session.path("weak_kam.svg"), result), "plot")
    print(f"✅ u_- after {result.iterations} iterations, u_+ after {result.conjugate_iterations}")
    print(f"   residuals: {result.residual_minus:.3e} / {result.residual_plus:.3e}")
    return session.finish(0, c=result.c, iterations=result.iterations)


def cmd_barrier(session: Session, args) -> int:
    B = session.barrier()
    session.wrote(artifacts.write_matrix_csv(session.path("barrier.csv"), B.h), "barrier")
    binary = session.path("barrier.bin")
    save_kernel(binary, B.as_kernel())
    session.wrote(binary, "barrier_cache")
    if session.config.plot:
        session.wrote(artifacts.plot_barrier_slices(session.path("barrier_slices.svg"), B), "plot")
    print(f"✅ Barrier settled over powers {B.power_window[0]}..{B.power_window[1]}, "
          f"min h(q,q) = {B.diag_min:.3e}")
    return session.finish(0, diag_min=B.diag_min, aubry_nodes=B.aubry_mask.count())


def cmd_aubry(session: Session, args) -> int:
    B = session.barrier()
    session.wrote(artifacts.write_aubry_csv(session.path("aubry.csv"), B.aubry_mask), "aubry")
    widened = " (widened)" if B.aubry_mask.widened else ""
    print(f"✅ {B.aubry_mask.count()} of {B.grid.size} nodes in the Aubry set{widened}")
    return session.finish(0, aubry_nodes=B.aubry_mask.count(), widened=B.aubry_mask.widened)


def cmd_selector(session: Session, args) -> int:
    config = session.config
    curve = config.curve.load(config.spec)
    grid, table, phi, retried = build_selector(curve, TorusGrid(1, config.n), session.event_log)
    sc = config.selector
    axioms = selector_axiom_check(phi, table, curve, sc.distance_tolerance(config.n), sc.val_tol,
                                  sc.kink_threshold(config.n))
    session.wrote(artifacts.write_phi_csv(session.path("phi.csv"), phi, table), "phi")
    if config.plot:
        session.wrote(artifacts.plot_selector(session.path("selector.svg"), phi, table, curve), "plot")
    shift = f", grid shifted by {grid.offset} spacing" if retried else ""
    print(f"✅ Selector over {table.folds} folds, at most {int(table.branch_counts().max())} branches{shift}")
    if not axioms.passed:
        print(f"⚠️  Selector axioms fail at {sum(len(v) for v in axioms.failures.values())} nodes")
    return session.finish(0, folds=table.folds, axioms_passed=axioms.passed)


def _verify(config: RunConfig, event_log: EventLog) -> VerifierReport:
    verifier_config = config.verifier_config()
    if config.curve.path is not None or config.curve.builtin is not None:
        return verify_birkhoff(config.spec, config.curve.load(config.spec), verifier_config, event_log)
    if config.spec.family != Family.ADAPTED:
        raise WkamError(ErrorCode.CONFIG, "verify needs a [curve], or an adapted Hamiltonian for the graph form")
    u, du = graph_field(config.spec, config.grid)
    return verify_graph_field(config.spec, u, verifier_config, du, event_log)


def cmd_verify(session: Session, args) -> int:
    report = _verify(session.config, session.event_log)
    session.wrote(write_report_jsonl(session.path("report.jsonl"), report), "report")
    text = ReportGenerator(report).generate_full_report()
    path = session.path("report.txt")
    with open(path, "w", newline="\n") as f:
        f.write(text)
    session.wrote(path, "report_text")
    print(text)
    return session.finish(report.exit_code, verdict=report.verdict.value, failed_stage=report.failed_stage)


def _coordinates(values: List[float], d: int, name: str) -> np.ndarray:
    if len(values) != d:
        raise WkamError(ErrorCode.CONFIG, f"--{name} needs {d} values, got {len(values)}")
    return np.array(values, dtype=float)


def cmd_flow(session: Session, args) -> int:
    config = session.config
    start = PhasePoint(_coordinates(args.q, config.d, "q"), _coordinates(args.p, config.d, "p"))
    dt = args.dt if args.dt is not None else config.flow.dt
    trajectory = flow_integrate(config.spec, start, args.T, dt, config.flow.p_max, args.record_every)
    session.wrote(artifacts.write_trajectory_csv(session.path("trajectory.csv"), trajectory), "trajectory")
    drift = energy_drift(config.spec, trajectory)
    print(f"✅ {len(trajectory)} samples over T={args.T}, energy drift {drift:.3e}")
    return session.finish(0, samples=len(trajectory), energy_drift=drift)


COMMANDS: Dict[str, Callable[[Session, argparse.Namespace], int]] = {
    "legendre": cmd_legendre,
    "kernel": cmd_kernel,
    "critical-value": cmd_critical_value,
    "weak-kam": cmd_weak_kam,
    "barrier": cmd_barrier,
    "aubry": cmd_aubry,
    "selector": cmd_selector,
    "verify": cmd_verify,
    "flow": cmd_flow,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        type=str,
        required=True,
        help="Path to INI run configuration"
    )
    common.add_argument(
        "--out",
        type=str,
        help="Output directory (overrides WKAM_OUT and [output] directory)"
    )
    common.add_argument(
        "--kernel-cache",
        type=str,
        help="Binary kernel cache to read, or to create when missing"
    )
    common.add_argument(
        "--plot",
        action="store_true",
        help="Also write SVG plots"
    )
    common.add_argument(
        "--threads",
        type=int,
        help="Worker threads for kernel products (results do not depend on it)"
    )
    common.add_argument(
        "--seed",
        type=int,
        help="Reserved; every computation is deterministic"
    )

    parser = argparse.ArgumentParser(
        description="Weak KAM solutions, Peierls barriers and graph verification on tori"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    legendre = sub.add_parser("legendre", parents=[common], help="Tabulate the Lagrangian")
    legendre.add_argument("--vmax", type=float, default=2.0, help="Velocity range per axis (default: 2.0)")
    legendre.add_argument("--points", type=int, default=41, help="Velocities per axis (default: 41)")

    sub.add_parser("kernel", parents=[common], help="Assemble and cache the action kernel")
    sub.add_parser("critical-value", parents=[common], help="Compute the critical value c")
    sub.add_parser("weak-kam", parents=[common], help="Solve for u_- and its conjugate u_+")
    sub.add_parser("barrier", parents=[common], help="Compute the Peierls barrier")
    sub.add_parser("aubry", parents=[common], help="List the Aubry set nodes")

    for name, text in (("selector", "Build the function selector of a curve"),
                       ("verify", "Run the graph verifier")):
        command = sub.add_parser(name, parents=[common], help=text)
        command.add_argument("--curve", type=str, help="Curve CSV with columns s,q,p (overrides [curve])")

    flow = sub.add_parser("flow", parents=[common], help="Integrate one orbit")
    flow.add_argument("--q", type=float, nargs="+", required=True, help="Initial position")
    flow.add_argument("--p", type=float, nargs="+", required=True, help="Initial momentum")
    flow.add_argument("--T", type=float, default=1.0, help="Duration, negative runs backward (default: 1.0)")
    flow.add_argument("--dt", type=float, help="Step size (default: [tolerances] dt)")
    flow.add_argument("--record-every", type=int, default=1, help="Keep every k-th step (default: 1)")
    return parser


def _apply_flags(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    if args.out:
        config.output_dir = Path(args.out)
    if args.kernel_cache:
        config.kernel_cache = Path(args.kernel_cache)
    if args.plot:
        config.plot = True
    if args.threads is not None:
        config.kernel = dataclasses.replace(config.kernel, threads=args.threads)
    if getattr(args, "curve", None):
        config.curve = CurveSource(path=Path(args.curve))
    return config


def run_command(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)
    session = None
    try:
        config = _apply_flags(load_run_config(args.config), args)
        session = Session(config, args.command, args.config)
        return COMMANDS[args.command](session, args)
    except (WkamError, ValueError, OSError) as exc:
        print(f"❌ {exc}")
        if session is not None:
            session.finish(1, error=str(exc))
        return 1


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
