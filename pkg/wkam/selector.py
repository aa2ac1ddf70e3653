"""
Function selector for exact Lagrangian curves in T*T^1.

A closed curve is kept as an ordered polyline of samples (q, p). Its primitive S is
accumulated along the polyline from sample 0, the branches over a grid fiber are the
polyline's crossings with that fiber, and the selector takes the lowest branch value.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from wkam.errors import ErrorCode, WkamError
from wkam.events import EventLog, EventType, emit
from wkam.torus import GridField, TorusGrid, differentiable_mask, central_gradient, wrap, wrap_displacement

MIN_SAMPLES = 64
FOLD_NODE_TOL = 1e-9
RICHARDSON_SCALES = ((1, 2), (2, 4), (4, 8))


class LagrangianCurve:
    """A closed polyline of samples (q, p) on T*T^1, orientation as given."""

    def __init__(self, q: np.ndarray, p: np.ndarray):
        q = wrap(np.asarray(q, dtype=float).reshape(-1))
        p = np.asarray(p, dtype=float).reshape(-1)
        if q.size != p.size:
            raise ValueError(f"q and p lengths differ: {q.size} vs {p.size}")
        if q.size > 1 and abs(wrap_displacement(q[-1] - q[0])) < 1e-12 and abs(p[-1] - p[0]) < 1e-12:
            q, p = q[:-1], p[:-1]
        if q.size < MIN_SAMPLES:
            raise ValueError(f"a curve needs at least {MIN_SAMPLES} samples, got {q.size}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("curve samples must be finite")
        self.q = q
        self.p = p
        self.dq = wrap_displacement(np.roll(q, -1) - q)
        self.dp = np.roll(p, -1) - p
        gaps = np.hypot(self.dq, self.dp)
        limit = 4.0 / q.size
        if gaps[-1] > limit:
            raise WkamError(ErrorCode.NOT_CLOSED, f"last sample is {gaps[-1]:.4g} away from the first",
                            gap=float(gaps[-1]), limit=limit)
        if np.max(gaps) > limit:
            worst = int(np.argmax(gaps))
            raise ValueError(f"sample gap {gaps[worst]:.4g} after sample {worst} exceeds {limit:.4g}")

    def __len__(self) -> int:
        return self.q.size

    def __repr__(self) -> str:
        return f"LagrangianCurve(samples={len(self)}, winding={self.winding})"

    @property
    def winding(self) -> int:
        return int(np.rint(self.dq.sum()))

    def lifted_q(self) -> np.ndarray:
        return self.q[0] + np.concatenate([[0.0], np.cumsum(self.dq[:-1])])

    def primitive(self) -> np.ndarray:
        """S at each sample: trapezoidal integral of p dq from sample 0."""
        increments = 0.5 * (self.p + np.roll(self.p, -1)) * self.dq
        return np.concatenate([[0.0], np.cumsum(increments[:-1])])

    def relabeled(self, start: int) -> "LagrangianCurve":
        """The same curve with sample ``start`` moved to the front."""
        return LagrangianCurve(np.roll(self.q, -start), np.roll(self.p, -start))

    def max_momentum(self) -> float:
        return float(np.max(np.abs(self.p)))


@dataclass
class BranchTable:
    """For each grid node the fiber crossings: momenta p_k (sorted) and primitive values S_k."""

    grid: TorusGrid
    momenta: List[np.ndarray]
    values: List[np.ndarray]
    folds: int = 0
    winding: int = 1
    crossing_segments: List[np.ndarray] = field(default_factory=list, repr=False)

    def branch_counts(self) -> np.ndarray:
        return np.array([m.size for m in self.momenta])


def exactness_check(curve: LagrangianCurve) -> float:
    """Liouville integral of p dq around the closed polyline."""
    return float(np.sum(0.5 * (curve.p + np.roll(curve.p, -1)) * curve.dq))


def fold_points(curve: LagrangianCurve) -> List[int]:
    """Sample indices where the projection to q turns back."""
    before = np.sign(np.roll(curve.dq, 1))
    after = np.sign(curve.dq)
    return [int(i) for i in np.flatnonzero(before * after < 0)]


def branch_decompose(curve: LagrangianCurve, grid: TorusGrid) -> BranchTable:
    """Intersect the polyline with every vertical fiber over the grid.

    Each segment is taken half-open, so a node hit exactly by a sample is counted once.
    """
    if grid.dim != 1:
        raise WkamError(ErrorCode.UNSUPPORTED_DIMENSION, "selectors are built for curves in T*T^1 only",
                        dim=grid.dim)
    folds = fold_points(curve)
    x = grid.nodes()[:, 0]
    for i in folds:
        gap = np.min(np.abs(wrap_displacement(curve.q[i] - x)))
        if gap <= FOLD_NODE_TOL:
            raise WkamError(ErrorCode.FOLD_ON_NODE, f"fold at sample {i} sits on a grid fiber",
                            sample=i, q=float(curve.q[i]))

    S = curve.primitive()
    # signed offsets of both segment ends from every fiber; a segment takes the
    # fiber it starts on, never the one it ends on
    start = wrap_displacement(curve.q[None, :] - x[:, None])
    end = wrap_displacement(np.roll(curve.q, -1)[None, :] - x[:, None])
    short = np.abs(end - start) < 0.5
    hits = short & (((start <= 0) & (end > 0)) | ((start >= 0) & (end < 0)))

    momenta, values, segments = [], [], []
    for node in range(grid.size):
        seg = np.flatnonzero(hits[node])
        if seg.size == 0:
            raise ValueError(f"curve does not cross the fiber over node {node}")
        e0, e1 = start[node, seg], end[node, seg]
        frac = e0 / (e0 - e1)
        p0, dp = curve.p[seg], curve.dp[seg]
        p = p0 + frac * dp
        s = S[seg] - e0 * (p0 + 0.5 * frac * dp)
        order = np.argsort(p, kind="stable")
        momenta.append(p[order])
        values.append(s[order])
        segments.append(seg[order])
    return BranchTable(grid, momenta, values, len(folds), curve.winding, segments)


def selector(table: BranchTable, event_log: Optional[EventLog] = None) -> GridField:
    """Phi(q) = lowest branch value over q."""
    phi = GridField(table.grid, np.array([v.min() for v in table.values]))
    emit(event_log, EventType.SELECTOR_BUILT, "selector", n=table.grid.n, folds=table.folds,
         max_branches=int(table.branch_counts().max()))
    return phi


def selector_momentum(table: BranchTable) -> np.ndarray:
    """Momentum of the branch that realizes Phi at each node."""
    return np.array([m[np.argmin(v)] for m, v in zip(table.momenta, table.values)])


def closed_polyline_distance(points: np.ndarray, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Distance from each (q, p) in ``points`` to the closed polyline through (q[k], p[k]), periodic in q."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    q, p = np.asarray(q, dtype=float), np.asarray(p, dtype=float)
    ax = wrap_displacement(q[None, :] - points[:, :1])
    ay = p[None, :] - points[:, 1:2]
    bx = wrap_displacement(np.roll(q, -1) - q)[None, :]
    by = (np.roll(p, -1) - p)[None, :]
    length2 = bx * bx + by * by
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(length2 > 0, -(ax * bx + ay * by) / length2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    return np.min(np.hypot(ax + t * bx, ay + t * by), axis=1)


def polyline_distance(points: np.ndarray, curve: LagrangianCurve) -> np.ndarray:
    """Distance from each (q, p) in ``points`` to the curve."""
    return closed_polyline_distance(points, curve.q, curve.p)


@dataclass
class SelectorAxiomReport:
    passed: bool
    checked_nodes: int
    exceptional_nodes: List[int]
    exceptional_fraction: float
    allowed_fraction: float
    worst_distance: float
    worst_value_gap: float
    critical_value_gap: float
    failures: Dict[str, List[int]]


def selector_axiom_check(phi: GridField, table: BranchTable, curve: LagrangianCurve,
                         dist_tol: Optional[float] = None, val_tol: float = 1e-3,
                         kink_threshold: Optional[float] = None) -> SelectorAxiomReport:
    """Check that Phi is a function selector for the curve on the grid."""
    grid = phi.grid
    n = grid.n
    dist_tol = dist_tol if dist_tol is not None else 4.0 / n
    kink_threshold = kink_threshold if kink_threshold is not None else 10.0 / n
    smooth = differentiable_mask(phi, kink_threshold).values
    dphi = central_gradient(phi)[:, 0]
    q = grid.nodes()[:, 0]

    distances = polyline_distance(np.column_stack([q, dphi]), curve)
    matched_gap = np.array([abs(phi.values[i] - table.values[i][np.argmin(np.abs(table.momenta[i] - dphi[i]))])
                            for i in range(grid.size)])
    critical_gap = np.array([np.min(np.abs(table.values[i] - phi.values[i])) for i in range(grid.size)])

    failures = {
        "near_curve": [int(i) for i in np.flatnonzero(smooth & (distances > dist_tol))],
        "matched_value": [int(i) for i in np.flatnonzero(smooth & (matched_gap > val_tol))],
        "critical_value": [int(i) for i in np.flatnonzero(critical_gap > val_tol)],
    }
    exceptional = [int(i) for i in np.flatnonzero(~smooth)]
    fraction = len(exceptional) / grid.size
    allowed = table.folds * 2.0 / n
    return SelectorAxiomReport(
        passed=not any(failures.values()) and fraction <= allowed,
        checked_nodes=int(smooth.sum()),
        exceptional_nodes=exceptional,
        exceptional_fraction=fraction,
        allowed_fraction=allowed,
        worst_distance=float(distances[smooth].max()) if smooth.any() else 0.0,
        worst_value_gap=float(matched_gap[smooth].max()) if smooth.any() else 0.0,
        critical_value_gap=float(critical_gap.max()),
        failures=failures,
    )


def limiting_differentials(phi: GridField, node: int, axis: int = 0) -> Tuple[float, float]:
    """Hull of one-sided derivative estimates at ``node`` along ``axis``.

    Each estimate is a Richardson combination 2*D(s) - D(2s) of one-sided quotients
    over s and 2s grid steps, s in 1, 2, 4.
    """
    arr = phi.as_array()
    h = phi.grid.spacing
    index = list(phi.grid.multi_index(node))
    center = arr[tuple(index)]

    def value_at(shift: int) -> float:
        moved = list(index)
        moved[axis] = (moved[axis] + shift) % phi.grid.n
        return arr[tuple(moved)]

    estimates = []
    for direction in (1, -1):
        for s, s2 in RICHARDSON_SCALES:
            near = direction * (value_at(direction * s) - center) / (s * h)
            far = direction * (value_at(direction * s2) - center) / (s2 * h)
            estimates.append(2.0 * near - far)
    return float(min(estimates)), float(max(estimates))


def read_curve_csv(path: Union[str, Path]) -> LagrangianCurve:
    """Read columns s, q, p; a last row repeating the first is dropped."""
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows or not {"q", "p"} <= set(rows[0]):
        raise ValueError(f"{path}: expected columns s,q,p")
    return LagrangianCurve([float(r["q"]) for r in rows], [float(r["p"]) for r in rows])


def write_curve_csv(path: Union[str, Path], curve: LagrangianCurve) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["s", "q", "p"])
        for i in range(len(curve)):
            writer.writerow([repr(i / len(curve)), repr(float(curve.q[i])), repr(float(curve.p[i]))])
