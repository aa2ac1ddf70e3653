"""
Weak KAM solutions, the critical value, domination and the Peierls barrier.

Everything here works on an ActionKernel K with K[j][i] ~ A_t(q_j, q_i). The drift
c*t enters through the shifted kernel K + c*t, whose minimum cycle mean is zero.
"""

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from wkam.errors import ErrorCode, WkamError
from wkam.events import EventLog, EventType, emit
from wkam.minplus import (
    ActionKernel,
    assemble_kernel,
    karp_min_mean_cycle,
    minplus_matvec,
    minplus_product,
)
from wkam.systems import TWO_PI, HamiltonianSpec
from wkam.torus import GridField, GridMask, PhasePoint, TorusGrid, central_gradient, differentiable_mask


@dataclass
class CriticalValueDiagnostics:
    """How c was obtained and the inf-max upper bound used to cross-check it."""

    cycle_mean: float
    t: float
    c_upper: Optional[float] = None
    coefficients: Optional[np.ndarray] = field(default=None, repr=False)
    descent_steps: int = 0


@dataclass
class WeakKamResult:
    c: float
    u_minus: GridField
    u_plus: GridField
    residual_minus: float
    residual_plus: float
    iterations: int
    conjugate_iterations: int = 0

    def gap(self) -> np.ndarray:
        """u_minus - u_plus at every node; nonnegative up to tolerance."""
        return self.u_minus.values - self.u_plus.values


@dataclass
class BarrierResult:
    """Peierls barrier h[q1][q2] on grid pairs and the nodes where h(q, q) vanishes."""

    c: float
    h: np.ndarray
    aubry_mask: GridMask
    diag_min: float
    power_window: Tuple[int, int]
    grid: TorusGrid
    t: float
    tol: float
    aubry_tol: float

    def diagonal(self) -> np.ndarray:
        return np.diag(self.h).copy()

    def as_kernel(self) -> ActionKernel:
        """The barrier packed as a kernel so it can go through the binary cache format."""
        return ActionKernel(self.grid, self.t * self.power_window[1], self.h)


@dataclass
class DominationReport:
    """Outcome of both domination tests; ``passed`` needs both."""

    passed: bool
    worst_margin: float
    witness: Dict[str, object]
    curve_passed: bool
    curve_margin: float
    derivative_passed: bool
    derivative_margin: float
    minus_form_passed: bool
    plus_form_passed: bool
    excluded_nodes: int = 0


@dataclass
class BoundReport:
    """Result of checking u(q2) - u(q1) <= h(q1, q2) on every pair."""

    passed: bool
    worst_margin: float
    witness: Tuple[int, int]


def _wave_vectors(dim: int, modes: int) -> np.ndarray:
    """Integer frequencies 0 < |k|_inf <= modes, one of each +-k pair."""
    out = []
    for k in itertools.product(range(-modes, modes + 1), repeat=dim):
        nonzero = [c for c in k if c != 0]
        if nonzero and nonzero[0] > 0:
            out.append(k)
    return np.array(out, dtype=float)


def _inf_max_upper_bound(spec: HamiltonianSpec, grid: TorusGrid, modes: int,
                         steps: int) -> Tuple[float, np.ndarray]:
    """min over trigonometric u of max_q H(q, du(q)) by normalized subgradient descent."""
    nodes = grid.nodes()
    ks = _wave_vectors(grid.dim, modes)
    theta = TWO_PI * nodes @ ks.T
    cos, sin = np.cos(theta), np.sin(theta)
    coef = np.zeros(2 * ks.shape[0])

    def objective(x):
        a, b = x[:ks.shape[0]], x[ks.shape[0]:]
        du = TWO_PI * ((-sin * a + cos * b) @ ks)
        values = spec.value(nodes, du)
        return values, du

    values, du = objective(coef)
    best, best_coef = float(values.max()), coef.copy()
    for j in range(steps):
        worst = int(np.argmax(values))
        _, hp = spec.gradient(nodes[worst:worst + 1], du[worst:worst + 1])
        slope = TWO_PI * (ks @ hp[0])
        grad = np.concatenate([-sin[worst] * slope, cos[worst] * slope])
        norm = np.linalg.norm(grad)
        if norm == 0:
            break
        coef = coef - 0.02 / np.sqrt(j + 1.0) * grad / norm
        values, du = objective(coef)
        if values.max() < best:
            best, best_coef = float(values.max()), coef.copy()
    return best, best_coef


def critical_value(K: ActionKernel, spec: Optional[HamiltonianSpec] = None, tol: float = 1e-3,
                   modes: int = 2, descent_steps: int = 200,
                   event_log: Optional[EventLog] = None) -> Tuple[float, CriticalValueDiagnostics]:
    """Mane critical value c = -lambda/t from the minimum cycle mean lambda of K.

    With ``spec`` the value is cross-checked against an inf-max upper bound over
    trigonometric polynomials of degree ``modes``; a bound far below c means the
    kernel is too coarse.
    """
    lam = karp_min_mean_cycle(K)
    c = -lam / K.t + 0.0
    diagnostics = CriticalValueDiagnostics(cycle_mean=lam, t=K.t)
    if spec is not None:
        c_upper, coef = _inf_max_upper_bound(spec, K.grid, modes, descent_steps)
        diagnostics.c_upper = c_upper
        diagnostics.coefficients = coef
        diagnostics.descent_steps = descent_steps
        if c_upper < c - 10 * tol:
            raise WkamError(ErrorCode.CROSSCHECK_FAIL,
                            f"inf-max bound {c_upper:.6g} is below the cycle value {c:.6g}",
                            c=c, c_upper=c_upper)
    emit(event_log, EventType.CRITICAL_VALUE, "weakkam", c=c, c_upper=diagnostics.c_upper)
    return c, diagnostics


def _drift(sign: str, c: float, t: float) -> float:
    if sign == "-":
        return c * t
    if sign == "+":
        return -c * t
    raise ValueError(f"sign must be '-' or '+', got {sign!r}")


def fixed_point_defect(u: GridField, K: ActionKernel, c: float, sign: str = "-") -> float:
    """sup |T_t^(sign) u (+-) c t - u|, zero exactly for weak KAM solutions."""
    image = minplus_matvec(K, u.values, sign) + _drift(sign, c, K.t)
    return float(np.max(np.abs(image - u.values)))


def weak_kam_solve(K: ActionKernel, c: float, sign: str = "-", tol: float = 1e-6, base: int = 0,
                   max_iter: int = 20000, init: Optional[GridField] = None,
                   event_log: Optional[EventLog] = None) -> GridField:
    """Value iteration u <- T u (+-) c t, renormalized to vanish at ``base``."""
    u, _ = _value_iteration(K, c, sign, tol, base, max_iter, init, event_log)
    return u


def _value_iteration(K, c, sign, tol, base, max_iter, init, event_log) -> Tuple[GridField, int]:
    drift = _drift(sign, c, K.t)
    u = np.zeros(K.size) if init is None else init.values - init.values[base]
    best_residual, best_u = np.inf, u
    for iteration in range(1, max_iter + 1):
        image = minplus_matvec(K, u, sign) + drift
        residual = float(np.max(np.abs(image - u)))
        if residual < best_residual:
            best_residual, best_u = residual, u
        if residual <= tol:
            emit(event_log, EventType.SOLVER_CONVERGED, "weakkam", sign=sign, iterations=iteration,
                 residual=residual)
            return GridField(K.grid, u), iteration
        u = image - image[base]
    raise WkamError(ErrorCode.MAX_ITER, f"value iteration stalled at residual {best_residual:.3g}",
                    residual=best_residual, iterate=best_u, iterations=max_iter)


def conjugate_pair(u_minus: GridField, K: ActionKernel, c: float, tol: float = 1e-6,
                   max_iter: int = 20000, iterations: int = 0,
                   event_log: Optional[EventLog] = None) -> WeakKamResult:
    """Positive solution u_plus = lim (T_t^+)^k u_minus - k c t.

    A dominated start makes the sequence nonincreasing; any increase means c does not
    belong to K.
    """
    drift = -c * K.t
    v = u_minus.values.copy()
    for step in range(1, max_iter + 1):
        w = minplus_matvec(K, v, "+") + drift
        rise = float(np.max(w - v))
        if rise > tol:
            raise WkamError(ErrorCode.MONOTONICITY_FAIL, f"conjugate iteration increased by {rise:.3g}",
                            step=step, rise=rise)
        change = float(np.max(np.abs(w - v)))
        v = w
        if change <= tol:
            break
    else:
        raise WkamError(ErrorCode.MAX_ITER, "conjugate iteration did not settle", iterate=v, iterations=max_iter)

    u_plus = GridField(K.grid, v)
    excess = float(np.max(u_plus.values - u_minus.values))
    if excess > tol:
        raise WkamError(ErrorCode.MONOTONICITY_FAIL, f"u_plus exceeds u_minus by {excess:.3g}", excess=excess)
    emit(event_log, EventType.CONJUGATE_CONVERGED, "weakkam", iterations=step)
    return WeakKamResult(
        c=c,
        u_minus=u_minus,
        u_plus=u_plus,
        residual_minus=fixed_point_defect(u_minus, K, c, "-"),
        residual_plus=fixed_point_defect(u_plus, K, c, "+"),
        iterations=iterations,
        conjugate_iterations=step,
    )


def solve_weak_kam(K: ActionKernel, c: float, tol: float = 1e-6, base: int = 0, max_iter: int = 20000,
                   event_log: Optional[EventLog] = None) -> WeakKamResult:
    """Negative solution followed by its conjugate."""
    u_minus, iterations = _value_iteration(K, c, "-", tol, base, max_iter, None, event_log)
    return conjugate_pair(u_minus, K, c, tol, max_iter, iterations, event_log)


def equality_set(result: WeakKamResult, tol: float = 2e-6) -> GridMask:
    """Nodes where u_minus and u_plus agree."""
    return GridMask(result.u_minus.grid, np.abs(result.gap()) <= tol)


def domination_check(u: GridField, k: float, spec: HamiltonianSpec, grid: Optional[TorusGrid] = None,
                     tol: float = 1e-3, horizons: Sequence[float] = (0.25, 0.5),
                     kernels: Optional[Sequence[ActionKernel]] = None,
                     kink_threshold: Optional[float] = None, winding: int = 2) -> DominationReport:
    """Test u < L + k on discrete curves and through the almost-everywhere criterion."""
    grid = grid or u.grid
    if kernels is None:
        kernels = [assemble_kernel(spec, grid, t, winding) for t in horizons]
    values = u.values

    curve_margin, curve_witness = np.inf, {}
    minus_ok = plus_ok = True
    for K in kernels:
        # margins[a][b] = A_t(a, b) + k t - (u(b) - u(a))
        margins = K.entries + k * K.t - (values[None, :] - values[:, None])
        worst = int(np.argmin(margins))
        if margins.flat[worst] < curve_margin:
            a, b = divmod(worst, grid.size)
            curve_margin = float(margins.flat[worst])
            curve_witness = {"test": "curve", "source": a, "target": b, "t": K.t}
        minus_ok &= bool(np.all(values <= k * K.t + minplus_matvec(K, values, "-") + tol))
        plus_ok &= bool(np.all(minplus_matvec(K, values, "+") - k * K.t <= values + tol))

    threshold = kink_threshold if kink_threshold is not None else 10.0 / grid.n
    smooth = differentiable_mask(u, threshold).values
    du = central_gradient(u)
    slack = np.where(smooth, k - spec.value(grid.nodes(), du), np.inf)
    node = int(np.argmin(slack))
    derivative_margin = float(slack[node]) if smooth.any() else 0.0

    curve_passed = curve_margin >= -tol
    derivative_passed = derivative_margin >= -tol
    if derivative_margin < curve_margin:
        witness = {"test": "derivative", "node": node, "q": grid.node(node).tolist()}
    else:
        witness = curve_witness
    return DominationReport(
        passed=curve_passed and derivative_passed,
        worst_margin=min(curve_margin, derivative_margin),
        witness=witness,
        curve_passed=curve_passed,
        curve_margin=curve_margin,
        derivative_passed=derivative_passed,
        derivative_margin=derivative_margin,
        minus_form_passed=minus_ok,
        plus_form_passed=plus_ok,
        excluded_nodes=int((~smooth).sum()),
    )


def peierls_barrier(K: ActionKernel, c: float, tol: float = 1e-6, window: int = 16, max_powers: int = 400,
                    aubry_tol: Optional[float] = None, threads: int = 1,
                    event_log: Optional[EventLog] = None) -> BarrierResult:
    """h = liminf of (K + c t)^(x)k, realized as the minimum over the last ``window`` powers."""
    if window < 1 or max_powers < window:
        raise ValueError(f"need 1 <= window <= max_powers, got {window}, {max_powers}")
    shifted = K.entries + c * K.t
    residual_mean = karp_min_mean_cycle(shifted)
    if abs(residual_mean) > max(tol, 1e-9):
        raise ValueError(f"K + c t has cycle mean {residual_mean:.3g}; c is not critical for this kernel")

    recent = deque(maxlen=window)
    power = shifted
    h = None
    for k in range(1, max_powers + 1):
        if k > 1:
            power = minplus_product(power, shifted, threads)
        recent.append(power)
        if len(recent) < window:
            continue
        candidate = np.minimum.reduce(list(recent))
        if h is not None and np.max(np.abs(candidate - h)) <= tol:
            h = candidate
            break
        h = candidate
    else:
        raise WkamError(ErrorCode.NO_STABILIZE, f"barrier window did not settle within {max_powers} powers",
                        max_powers=max_powers)

    aubry_tol = aubry_tol if aubry_tol is not None else 5.0 / K.grid.n
    diag = np.diag(h)
    result = BarrierResult(
        c=c,
        h=h,
        aubry_mask=GridMask(K.grid, diag <= aubry_tol),
        diag_min=float(diag.min()),
        power_window=(k - window + 1, k),
        grid=K.grid,
        t=K.t,
        tol=tol,
        aubry_tol=aubry_tol,
    )
    result.aubry_mask = aubry_set(result, aubry_tol, event_log)
    emit(event_log, EventType.BARRIER_STABILIZED, "weakkam", powers=k, diag_min=result.diag_min)
    return result


def aubry_set(B: BarrierResult, aubry_tol: Optional[float] = None,
              event_log: Optional[EventLog] = None) -> GridMask:
    """Nodes with h(q, q) <= aubry_tol; widened to diag_min + aubry_tol if that is empty."""
    aubry_tol = B.aubry_tol if aubry_tol is None else aubry_tol
    diag = np.diag(B.h)
    mask = diag <= aubry_tol
    if mask.any():
        return GridMask(B.grid, mask)
    widened = float(diag.min()) + aubry_tol
    emit(event_log, EventType.AUBRY_WIDENED, "weakkam", aubry_tol=aubry_tol, widened_to=widened)
    return GridMask(B.grid, diag <= widened, widened=True)


def barrier_bound_check(u: GridField, B: BarrierResult, tol: float = 1e-3) -> BoundReport:
    margins = B.h - (u.values[None, :] - u.values[:, None])
    worst = int(np.argmin(margins))
    q1, q2 = divmod(worst, B.grid.size)
    margin = float(margins.flat[worst])
    return BoundReport(passed=margin >= -tol, worst_margin=margin, witness=(q1, q2))


def aubry_lift(mask: GridMask, u: GridField) -> List[PhasePoint]:
    """Points (q, du(q)) over the masked nodes."""
    du = central_gradient(u)
    return [PhasePoint(mask.grid.node(i), du[i]) for i in mask.indices()]
