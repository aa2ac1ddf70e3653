"""
Graph verifier.

Takes a Tonelli Hamiltonian and a candidate invariant exact Lagrangian curve, runs it
through the weak KAM chain (selector, critical value, domination, barrier, limit sets)
and decides whether the curve is the graph of dPhi for the selector Phi.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from wkam.config import VerifierConfig
from wkam.errors import ErrorCode, WkamError
from wkam.events import EventLog, EventType, emit
from wkam.minplus import ActionKernel, assemble_kernel, minplus_matmul
from wkam.selector import (
    BranchTable,
    LagrangianCurve,
    branch_decompose,
    closed_polyline_distance,
    exactness_check,
    fold_points,
    limiting_differentials,
    polyline_distance,
    selector,
    selector_axiom_check,
    selector_momentum,
)
from wkam.systems import HamiltonianSpec, Trajectory, flow_integrate, flow_integrate_batch, lagrangian_batch
from wkam.torus import (
    GridField,
    GridMask,
    PhasePoint,
    TorusGrid,
    central_gradient,
    differentiable_mask,
    wrap,
    wrap_displacement,
)
from wkam.weakkam import (
    BarrierResult,
    barrier_bound_check,
    critical_value,
    domination_check,
    peierls_barrier,
)


class Verdict(Enum):
    """Outcome of a verification run."""

    GRAPH = "GRAPH"
    NOT_GRAPH = "NOT_GRAPH"
    NOT_INVARIANT = "NOT_INVARIANT"
    NOT_EXACT = "NOT_EXACT"
    INCONCLUSIVE = "INCONCLUSIVE"

    @property
    def exit_code(self) -> int:
        if self == Verdict.GRAPH:
            return 0
        if self == Verdict.INCONCLUSIVE:
            return 3
        return 2


@dataclass
class StageRecord:
    """One verification stage; a positive margin is slack left under the tolerance."""

    name: str
    passed: bool
    margin: Optional[float] = None
    details: Dict[str, Any] = field(default_factory=dict)
    mandatory: bool = True


@dataclass
class VerifierReport:
    verdict: Verdict
    stages: List[StageRecord]
    k_level: Optional[float] = None
    c_value: Optional[float] = None
    hausdorff_graph_vs_curve: Optional[float] = None
    n: int = 0
    failed_stage: Optional[str] = None
    notes: List[str] = field(default_factory=list)

    def stage(self, name: str) -> Optional[StageRecord]:
        for record in self.stages:
            if record.name == name:
                return record
        return None

    @property
    def exit_code(self) -> int:
        return self.verdict.exit_code


@dataclass
class InvarianceReport:
    passed: bool
    max_distance: float
    worst_sample: int
    T: float


@dataclass
class KEqualsCReport:
    passed: bool
    gap: float
    k_below_c: bool
    note: str = ""


@dataclass
class ActionIdentityReport:
    lhs: float
    rhs: float
    difference: float
    passed: bool


@dataclass
class BarrierInequalityReport:
    passed: bool
    omega_margin: float
    alpha_margin: float
    nodes: Tuple[int, int, int]


@dataclass
class NonwanderingReport:
    passed: bool
    recurrent: List[int]
    violators: List[int]
    worst_distance: float


def _level(spec: HamiltonianSpec, q: np.ndarray, p: np.ndarray) -> Tuple[float, float]:
    energy = spec.value(q, p)
    k = float(np.mean(energy))
    return k, float(np.max(np.abs(energy - k)))


def level_set_check(spec: HamiltonianSpec, curve: LagrangianCurve) -> Tuple[float, float]:
    """(k, max |H - k|) over the curve samples, with k the mean energy."""
    return _level(spec, curve.q[:, None], curve.p[:, None])


def _sample_indices(count: int, samples: int) -> np.ndarray:
    return np.unique(np.linspace(0, count, min(samples, count), endpoint=False).astype(int))


def _record_every(T: float, dt: float, records: int) -> int:
    return max(1, int(np.ceil(abs(T) / dt)) // records)


def invariance_check(spec: HamiltonianSpec, curve: LagrangianCurve, T: float = 2.0, tol: float = 1e-4,
                     samples: int = 64, dt: float = 2e-3, p_max: float = 10.0) -> InvarianceReport:
    """Flow curve samples for time T and measure how far they drift from the polyline."""
    idx = _sample_indices(len(curve), samples)
    _, q, p = flow_integrate_batch(spec, curve.q[idx, None], curve.p[idx, None], T, dt, p_max,
                                   _record_every(T, dt, 20))
    points = np.column_stack([wrap(q[..., 0]).ravel(), p[..., 0].ravel()])
    distance = polyline_distance(points, curve).reshape(q.shape[:2]).max(axis=0)
    worst = int(np.argmax(distance))
    return InvarianceReport(bool(distance[worst] <= tol), float(distance[worst]), int(idx[worst]), T)


def _graph_invariance(spec: HamiltonianSpec, u: GridField, du: np.ndarray, T: float, tol: float,
                      samples: int, dt: float, p_max: float) -> InvarianceReport:
    grid = u.grid
    idx = _sample_indices(grid.size, samples)
    _, q, p = flow_integrate_batch(spec, grid.nodes()[idx], du[idx], T, dt, p_max, _record_every(T, dt, 20))
    flat_q = q.reshape(-1, grid.dim)
    graph_p = np.stack([GridField(grid, du[:, a]).interpolate(flat_q) for a in range(grid.dim)], axis=-1)
    distance = np.linalg.norm(p.reshape(-1, grid.dim) - graph_p, axis=-1).reshape(q.shape[:2]).max(axis=0)
    worst = int(np.argmax(distance))
    return InvarianceReport(bool(distance[worst] <= tol), float(distance[worst]), int(idx[worst]), T)


def k_equals_c_check(k: float, c: float, tol: float = 1e-3) -> KEqualsCReport:
    gap = abs(k - c)
    note = ""
    if k < c - tol:
        note = "k<c: an invariant curve isotopic to the zero section must lie in {H=c}"
    elif k > c + tol:
        note = "k>c beyond tolerance: kernel resolution too coarse"
    return KEqualsCReport(passed=gap <= tol, gap=gap, k_below_c=k <= c + tol, note=note)


def _cluster_tail(q: np.ndarray, p: np.ndarray, recur_tol: float) -> List[Tuple[PhasePoint, int]]:
    """Greedy ball clustering of the last fifth of a sampled orbit, most populated first."""
    start = int(0.8 * (q.shape[0] - 1))
    q, p = wrap(q[start:]), p[start:]
    remaining = np.ones(q.shape[0], dtype=bool)
    clusters = []
    while remaining.any():
        i = int(np.argmax(remaining))
        dq = wrap_displacement(q - q[i])
        dist = np.sqrt(np.sum(dq ** 2, axis=-1) + np.sum((p - p[i]) ** 2, axis=-1))
        members = remaining & (dist <= recur_tol)
        clusters.append((PhasePoint(q[i], p[i]), int(members.sum())))
        remaining &= ~members
    clusters.sort(key=lambda c: -c[1])
    return clusters


def omega_limit_points(spec: HamiltonianSpec, x0: PhasePoint, T: float = 200.0, recur_tol: float = 0.05,
                       dt: float = 1e-2, p_max: float = 10.0) -> List[PhasePoint]:
    """Cluster points of the orbit tail; a negative T gives alpha-limit points."""
    trajectory = flow_integrate(spec, x0, T, dt, p_max, _record_every(T, dt, 2000))
    return [point for point, _ in _cluster_tail(trajectory.q, trajectory.p, recur_tol)]


def action_identity_check(spec: HamiltonianSpec, trajectory: Trajectory, c: float,
                          tol: float = 1e-4) -> ActionIdentityReport:
    """Compare the integrals of p.qdot and L(q, qdot) + c along an orbit."""
    _, velocity = spec.gradient(trajectory.q, trajectory.p)
    lag, _ = lagrangian_batch(spec, wrap(trajectory.q), velocity)
    lhs = float(trapezoid(np.sum(trajectory.p * velocity, axis=-1), trajectory.times))
    rhs = float(trapezoid(lag + c, trajectory.times))
    difference = abs(lhs - rhs)
    return ActionIdentityReport(lhs, rhs, difference, difference <= tol * (1 + abs(trajectory.duration)))


def barrier_inequality_check(phi: GridField, B: BarrierResult, q: int, q1: int, q2: int,
                             tol: float = 1e-3) -> BarrierInequalityReport:
    """Phi(q1) - Phi(q) >= h(q, q1) and Phi(q) - Phi(q2) >= h(q2, q), up to tol."""
    values = phi.values
    omega = float(values[q1] - values[q] - B.h[q, q1])
    alpha = float(values[q] - values[q2] - B.h[q2, q])
    return BarrierInequalityReport(omega >= -tol and alpha >= -tol, omega, alpha, (q, q1, q2))


def _lift_points(mask: GridMask, lift_field: GridField) -> Tuple[np.ndarray, np.ndarray]:
    idx = mask.indices()
    return mask.grid.nodes()[idx], central_gradient(lift_field)[idx]


def _nonwandering(spec, q0, p0, B, lift_field, T, tol, recur_tol, dt, p_max) -> NonwanderingReport:
    times, q, p = flow_integrate_batch(spec, q0, p0, T, dt, p_max, _record_every(T, dt, 500))
    late = times >= 0.1 * T
    dq = wrap_displacement(q[late] - q[0][None])
    returns = np.sqrt(np.sum(dq ** 2, axis=-1) + np.sum((p[late] - p[0][None]) ** 2, axis=-1))
    recurrent = np.flatnonzero(returns.min(axis=0) <= recur_tol)

    lift_q, lift_p = _lift_points(B.aubry_mask, lift_field)
    gaps = np.zeros(recurrent.size)
    for j, i in enumerate(recurrent):
        dq = wrap_displacement(lift_q - wrap(q0[i]))
        gaps[j] = np.min(np.sqrt(np.sum(dq ** 2, axis=-1) + np.sum((lift_p - p0[i]) ** 2, axis=-1)))
    violators = recurrent[gaps > tol]
    return NonwanderingReport(
        passed=violators.size == 0,
        recurrent=[int(i) for i in recurrent],
        violators=[int(i) for i in violators],
        worst_distance=float(gaps.max()) if gaps.size else 0.0,
    )


def nonwandering_aubry_check(spec: HamiltonianSpec, curve: LagrangianCurve, B: BarrierResult,
                             lift_field: GridField, T: float = 5.0, tol: Optional[float] = None,
                             recur_tol: float = 0.05, samples: int = 64, dt: float = 1e-3,
                             p_max: float = 10.0) -> NonwanderingReport:
    """Recurrent curve samples must sit on the lifted Aubry set {(q, d lift_field(q))}.

    Report indices refer to the flowed samples, taken evenly along the curve.
    """
    tol = tol if tol is not None else 4.0 / B.grid.n
    idx = _sample_indices(len(curve), samples)
    return _nonwandering(spec, curve.q[idx, None], curve.p[idx, None], B, lift_field, T, tol, recur_tol,
                         dt, p_max)


def _dphi_lipschitz(phi: GridField) -> float:
    dphi = central_gradient(phi)[:, 0]
    return float(np.max(np.abs(np.roll(dphi, -1) - dphi)) * phi.grid.n)


class _StageRunner:
    """Runs stages in order, turning raised errors into failed records."""

    def __init__(self, event_log: Optional[EventLog]):
        self.stages: List[StageRecord] = []
        self.event_log = event_log

    def run(self, name: str, body: Callable[[], StageRecord], mandatory: bool = True) -> StageRecord:
        try:
            record = body()
        except (WkamError, ValueError) as exc:
            details = {"error": exc.code.name if isinstance(exc, WkamError) else "ValueError",
                       "message": str(exc)}
            record = StageRecord(name, False, None, details)
        record.name = name
        record.mandatory = mandatory
        self.stages.append(record)
        emit(self.event_log, EventType.STAGE_COMPLETE, "verifier", stage=name, passed=record.passed)
        return record

    def first_failure(self, names: Optional[Sequence[str]] = None) -> Optional[StageRecord]:
        for record in self.stages:
            if record.mandatory and not record.passed and (names is None or record.name in names):
                return record
        return None


class _AnalyticChain:
    """Stages shared by the curve route and the graph-form route.

    ``momenta`` holds the momentum paired with each node: the matched curve branch
    for curves, the supplied differential for graph-form input.
    """

    def __init__(self, spec: HamiltonianSpec, grid: TorusGrid, phi: GridField, momenta: np.ndarray,
                 k: float, config: VerifierConfig, runner: _StageRunner, event_log: Optional[EventLog]):
        self.spec = spec
        self.grid = grid
        self.phi = phi
        self.momenta = np.asarray(momenta, dtype=float).reshape(grid.size, grid.dim)
        self.k = k
        self.config = config
        self.runner = runner
        self.event_log = event_log
        self.kernel: Optional[ActionKernel] = None
        self.c: Optional[float] = None
        self.barrier: Optional[BarrierResult] = None
        self.sampled: List[int] = []

    def run(self) -> bool:
        steps = [
            ("kernel_critical_value", self.kernel_stage),
            ("domination", self.domination_stage),
            ("k_equals_c", self.k_equals_c_stage),
            ("barrier_aubry", self.barrier_stage),
            ("aubry_extremality", self.extremality_stage),
            ("barrier_inequalities", self.inequality_stage),
            ("nonwandering_aubry", self.nonwandering_stage),
        ]
        for name, body in steps:
            record = self.runner.run(name, body)
            if "error" in record.details:
                return False
        self.runner.run("action_identity", self.action_stage, mandatory=False)
        return True

    def kernel_stage(self) -> StageRecord:
        cfg = self.config
        self.kernel = assemble_kernel(self.spec, self.grid, cfg.kernel.t, cfg.kernel.winding, cfg.kernel.substeps,
                                      cfg.kernel.threads, cfg.flow.p_max, self.event_log)
        self.c, diagnostics = critical_value(self.kernel, self.spec, cfg.k_c_tol, event_log=self.event_log)
        return StageRecord("kernel_critical_value", True, float(diagnostics.c_upper - self.c + 10 * cfg.k_c_tol),
                           {"c": self.c, "c_upper": diagnostics.c_upper, "cycle_mean": diagnostics.cycle_mean,
                            "t": self.kernel.t, "W": self.kernel.winding, "m": self.kernel.substeps})

    def domination_stage(self) -> StageRecord:
        cfg = self.config
        kernels = [self.kernel, minplus_matmul(self.kernel, self.kernel, cfg.kernel.threads)]
        report = domination_check(self.phi, self.c, self.spec, self.grid, cfg.domination_tol, kernels=kernels,
                                  kink_threshold=cfg.selector.kink_threshold(self.grid.n))
        return StageRecord("domination", report.passed, report.worst_margin + cfg.domination_tol,
                           {"curve_margin": report.curve_margin, "derivative_margin": report.derivative_margin,
                            "minus_form": report.minus_form_passed, "plus_form": report.plus_form_passed,
                            "excluded_nodes": report.excluded_nodes, "witness": report.witness})

    def k_equals_c_stage(self) -> StageRecord:
        report = k_equals_c_check(self.k, self.c, self.config.k_c_tol)
        details = {"k": self.k, "c": self.c, "k_below_c": report.k_below_c}
        if report.note:
            details["note"] = report.note
        return StageRecord("k_equals_c", report.passed, self.config.k_c_tol - report.gap, details)

    def barrier_stage(self) -> StageRecord:
        cfg = self.config
        self.barrier = peierls_barrier(self.kernel, self.c, cfg.barrier.tol, cfg.barrier.window,
                                       cfg.barrier.max_powers, cfg.barrier.aubry_tolerance(self.grid.n),
                                       cfg.kernel.threads, self.event_log)
        bound = barrier_bound_check(self.phi, self.barrier, cfg.barrier_ineq_tol)
        passed = self.barrier.diag_min >= -cfg.barrier_ineq_tol and bound.passed
        margin = min(self.barrier.diag_min, bound.worst_margin) + cfg.barrier_ineq_tol
        return StageRecord("barrier_aubry", passed, margin,
                           {"diag_min": self.barrier.diag_min, "aubry_nodes": self.barrier.aubry_mask.count(),
                            "widened": self.barrier.aubry_mask.widened,
                            "power_window": list(self.barrier.power_window),
                            "bound_margin": bound.worst_margin, "bound_witness": list(bound.witness)})

    def extremality_stage(self) -> StageRecord:
        limit = 10.0 / self.grid.n
        worst, worst_node = 0.0, None
        for node in self.barrier.aubry_mask.indices():
            for axis in range(self.grid.dim):
                lo, hi = limiting_differentials(self.phi, node, axis)
                gap = min(abs(self.momenta[node, axis] - lo), abs(self.momenta[node, axis] - hi))
                if gap > worst:
                    worst, worst_node = gap, node
        return StageRecord("aubry_extremality", worst <= limit, limit - worst,
                           {"worst_gap": worst, "worst_node": worst_node})

    def inequality_stage(self) -> StageRecord:
        cfg = self.config
        smooth = np.flatnonzero(differentiable_mask(self.phi, cfg.selector.kink_threshold(self.grid.n)).values)
        if smooth.size == 0:
            smooth = np.arange(self.grid.size)
        picks = np.unique(np.linspace(0, smooth.size - 1, min(cfg.sampled_nodes, smooth.size)).round().astype(int))
        self.sampled = [int(i) for i in smooth[picks]]
        q0, p0 = self.grid.nodes()[self.sampled], self.momenta[self.sampled]

        limits = {}
        for label, T in (("omega", cfg.omega_T), ("alpha", -cfg.omega_T)):
            _, q, p = flow_integrate_batch(self.spec, q0, p0, T, cfg.omega_dt, cfg.flow.p_max,
                                           _record_every(T, cfg.omega_dt, 500))
            limits[label] = [self.grid.nearest_node(_cluster_tail(q[:, j], p[:, j], cfg.recur_tol)[0][0].q)
                             for j in range(len(self.sampled))]

        worst, failures = np.inf, []
        for j, node in enumerate(self.sampled):
            report = barrier_inequality_check(self.phi, self.barrier, node, limits["omega"][j], limits["alpha"][j],
                                              cfg.barrier_ineq_tol)
            worst = min(worst, report.omega_margin, report.alpha_margin)
            if not report.passed:
                failures.append(list(report.nodes))
        return StageRecord("barrier_inequalities", not failures, worst + cfg.barrier_ineq_tol,
                           {"sampled_nodes": self.sampled, "failures": failures})

    def nonwandering_stage(self) -> StageRecord:
        cfg = self.config
        idx = _sample_indices(self.grid.size, cfg.invariance_samples)
        tol = cfg.selector.distance_tolerance(self.grid.n)
        report = _nonwandering(self.spec, self.grid.nodes()[idx], self.momenta[idx], self.barrier, self.phi,
                               cfg.nonwandering_T, tol, cfg.recur_tol, cfg.flow.dt, cfg.flow.p_max)
        return StageRecord("nonwandering_aubry", report.passed, tol - report.worst_distance,
                           {"recurrent": len(report.recurrent), "violators": report.violators})

    def action_stage(self) -> StageRecord:
        cfg = self.config
        node = self.sampled[0] if self.sampled else 0
        start = PhasePoint(self.grid.node(node), self.momenta[node])
        trajectory = flow_integrate(self.spec, start, cfg.nonwandering_T, cfg.flow.dt, cfg.flow.p_max)
        report = action_identity_check(self.spec, trajectory, self.c, cfg.action_tol)
        return StageRecord("action_identity", report.passed,
                           cfg.action_tol * (1 + cfg.nonwandering_T) - report.difference,
                           {"lhs": report.lhs, "rhs": report.rhs, "node": node})


def build_selector(curve: LagrangianCurve, grid: TorusGrid,
                    event_log: Optional[EventLog]) -> Tuple[TorusGrid, BranchTable, GridField, bool]:
    """Selector on ``grid``, retried once on a half-spacing shifted grid when a fold sits on a fiber."""
    try:
        table = branch_decompose(curve, grid)
        retried = False
    except WkamError as exc:
        if exc.code != ErrorCode.FOLD_ON_NODE:
            raise
        grid = TorusGrid(grid.dim, grid.n, grid.offset + 0.5)
        emit(event_log, EventType.GRID_OFFSET_RETRY, "verifier", n=grid.n, offset=grid.offset)
        table = branch_decompose(curve, grid)
        retried = True
    return grid, table, selector(table, event_log), retried


def _finish(runner: _StageRunner, verdict: Verdict, failed: Optional[StageRecord], n: int, k, c,
            hausdorff, event_log: Optional[EventLog]) -> VerifierReport:
    report = VerifierReport(verdict, runner.stages, k, c, hausdorff, n,
                            failed.name if failed is not None else None)
    if failed is not None and failed.details.get("note"):
        report.notes.append(failed.details["note"])
    if failed is not None and failed.details.get("error"):
        report.notes.append(f"{failed.name}: {failed.details['message']}")
    emit(event_log, EventType.VERDICT, "verifier", verdict=verdict.value, failed_stage=report.failed_stage)
    return report


def verify_birkhoff(spec: HamiltonianSpec, curve: LagrangianCurve, config: Optional[VerifierConfig] = None,
                    event_log: Optional[EventLog] = None) -> VerifierReport:
    """Decide whether an invariant exact curve in T*T^1 is the graph of dPhi."""
    if spec.dim != 1:
        raise WkamError(ErrorCode.UNSUPPORTED_DIMENSION,
                        "curve input needs a Hamiltonian on T*T^1; use the graph form for d=2", dim=spec.dim)
    config = config or VerifierConfig()
    n = config.n
    runner = _StageRunner(event_log)
    state: Dict[str, Any] = {}

    def exactness() -> StageRecord:
        value = exactness_check(curve)
        return StageRecord("exactness", abs(value) <= config.exact_tol, config.exact_tol - abs(value),
                           {"liouville": value, "winding": curve.winding})

    def level_set() -> StageRecord:
        k, deviation = level_set_check(spec, curve)
        state["k"] = k
        return StageRecord("level_set", deviation <= config.level_tol, config.level_tol - deviation,
                           {"k": k, "deviation": deviation})

    def invariance() -> StageRecord:
        report = invariance_check(spec, curve, config.invariance_T, config.invariance_tol,
                                  config.invariance_samples, config.invariance_dt, config.flow.p_max)
        return StageRecord("invariance", report.passed, config.invariance_tol - report.max_distance,
                           {"max_distance": report.max_distance, "worst_sample": report.worst_sample,
                            "T": report.T})

    if not runner.run("exactness", exactness).passed:
        return _finish(runner, Verdict.NOT_EXACT, runner.stages[-1], n, None, None, None, event_log)
    for name, body in (("level_set", level_set), ("invariance", invariance)):
        if not runner.run(name, body).passed:
            return _finish(runner, Verdict.NOT_INVARIANT, runner.stages[-1], n, state.get("k"), None, None,
                           event_log)

    def selector_stage() -> StageRecord:
        grid, table, phi, retried = build_selector(curve, TorusGrid(1, n), event_log)
        state.update(grid=grid, table=table, phi=phi)
        axioms = selector_axiom_check(phi, table, curve, config.selector.distance_tolerance(n),
                                      config.selector.val_tol, config.selector.kink_threshold(n))
        return StageRecord("selector", axioms.passed, config.selector.distance_tolerance(n) - axioms.worst_distance,
                           {"folds": table.folds, "max_branches": int(table.branch_counts().max()),
                            "exceptional_nodes": axioms.exceptional_nodes,
                            "failures": {key: len(v) for key, v in axioms.failures.items()},
                            "grid_offset": grid.offset, "retried": retried})

    chain = None
    runner.run("selector", selector_stage)
    complete = "phi" in state
    if complete:
        chain = _AnalyticChain(spec, state["grid"], state["phi"], selector_momentum(state["table"]),
                               state["k"], config, runner, event_log)
        complete = chain.run()

    hausdorff = None
    if complete:
        def refinement() -> StageRecord:
            grid, phi = state["grid"], state["phi"]
            fine_grid, _, fine_phi, _ = build_selector(curve, grid.refined(), event_log)
            if fine_grid.offset != 2 * grid.offset:
                raise ValueError("refined selector grid is not nested in the coarse grid")
            lip, fine_lip = _dphi_lipschitz(phi), _dphi_lipschitz(fine_phi)
            stable = max(lip, fine_lip) <= 2.0 * min(lip, fine_lip) + 1e-6
            kink = config.selector.kink_threshold
            both = (differentiable_mask(phi, kink(n)).values
                    & differentiable_mask(fine_phi, kink(2 * n)).values[::2])
            gap = np.abs(central_gradient(phi)[:, 0] - central_gradient(fine_phi)[::2, 0])
            gap = float(gap[both].max()) if both.any() else 0.0
            tol = config.refinement_tolerance(n)
            return StageRecord("refinement_c11", stable and gap <= tol, tol - gap,
                               {"lipschitz_n": lip, "lipschitz_2n": fine_lip, "dphi_gap": gap})

        def hausdorff_stage() -> StageRecord:
            grid, phi = state["grid"], state["phi"]
            q = grid.nodes()[:, 0]
            dphi = central_gradient(phi)[:, 0]
            to_curve = polyline_distance(np.column_stack([q, dphi]), curve).max()
            to_graph = closed_polyline_distance(np.column_stack([curve.q, curve.p]), q, dphi).max()
            value = float(max(to_curve, to_graph))
            state["hausdorff"] = value
            tol = config.graph_tolerance(n)
            return StageRecord("hausdorff", value <= tol, tol - value, {"distance": value})

        runner.run("refinement_c11", refinement)
        runner.run("hausdorff", hausdorff_stage)
        hausdorff = state.get("hausdorff")

    def injectivity() -> StageRecord:
        folds = fold_points(curve)
        return StageRecord("projection_injectivity", not folds and abs(curve.winding) == 1, None,
                           {"folds": len(folds), "winding": curve.winding})

    injective = runner.run("projection_injectivity", injectivity)
    c = chain.c if chain is not None else None
    analytic_failure = runner.first_failure([s.name for s in runner.stages if s is not injective])
    if not injective.passed and complete and analytic_failure is None:
        injective.details["note"] = "routes disagree: analytic chain passed but the projection is not injective"
        verdict, failed = Verdict.INCONCLUSIVE, injective
    elif not injective.passed:
        verdict, failed = Verdict.NOT_GRAPH, injective
    else:
        failed = analytic_failure
        verdict = Verdict.GRAPH if failed is None and complete else Verdict.INCONCLUSIVE
    return _finish(runner, verdict, failed, n, state.get("k"), c, hausdorff, event_log)


def verify_graph_field(spec: HamiltonianSpec, u: GridField, config: Optional[VerifierConfig] = None,
                       du: Optional[np.ndarray] = None, event_log: Optional[EventLog] = None) -> VerifierReport:
    """Graph-form route: the candidate is the graph of ``du`` over the grid of ``u``.

    ``du`` defaults to the central-difference gradient of ``u``. The graph is a graph by
    construction, so only the invariance and weak KAM stages run.
    """
    config = config or VerifierConfig()
    grid = u.grid
    du = central_gradient(u) if du is None else np.asarray(du, dtype=float).reshape(grid.size, grid.dim)
    runner = _StageRunner(event_log)
    state: Dict[str, Any] = {}

    def level_set() -> StageRecord:
        k, deviation = _level(spec, grid.nodes(), du)
        state["k"] = k
        return StageRecord("level_set", deviation <= config.level_tol, config.level_tol - deviation,
                           {"k": k, "deviation": deviation})

    def invariance() -> StageRecord:
        report = _graph_invariance(spec, u, du, config.invariance_T, config.invariance_tol,
                                   config.invariance_samples, config.invariance_dt, config.flow.p_max)
        return StageRecord("invariance", report.passed, config.invariance_tol - report.max_distance,
                           {"max_distance": report.max_distance, "worst_sample": report.worst_sample,
                            "T": report.T})

    for name, body in (("level_set", level_set), ("invariance", invariance)):
        if not runner.run(name, body).passed:
            return _finish(runner, Verdict.NOT_INVARIANT, runner.stages[-1], grid.n, state.get("k"), None, None,
                           event_log)

    chain = _AnalyticChain(spec, grid, u, du, state["k"], config, runner, event_log)
    complete = chain.run()
    failed = runner.first_failure()
    verdict = Verdict.GRAPH if failed is None and complete else Verdict.INCONCLUSIVE
    return _finish(runner, verdict, failed, grid.n, state["k"], chain.c, None, event_log)
