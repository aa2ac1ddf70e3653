"""
CSV artifacts and SVG plots.

Floats are written with repr so every value reads back bit for bit.
"""

import csv
from pathlib import Path
from typing import Iterable, List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from wkam.selector import BranchTable, LagrangianCurve  # noqa: E402
from wkam.systems import Trajectory  # noqa: E402
from wkam.torus import GridField, GridMask, TorusGrid, central_gradient  # noqa: E402
from wkam.weakkam import BarrierResult, WeakKamResult  # noqa: E402

plt.rcParams["svg.hashsalt"] = "wkam"
plt.rcParams["svg.fonttype"] = "none"


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def read_matrix_csv(path: Path) -> np.ndarray:
    """Read a matrix written by write_matrix_csv."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return np.array([[float(v) for v in row[1:]] for row in rows[1:]])


def _coordinate_header(grid: TorusGrid) -> List[str]:
    return ["q"] if grid.dim == 1 else [f"q{a + 1}" for a in range(grid.dim)]


def write_matrix_csv(path: Path, matrix: np.ndarray) -> Path:
    """Row i holds matrix[i][:]; the first column is the row node index."""
    size = matrix.shape[0]
    header = ["node"] + [str(j) for j in range(size)]
    return write_csv(path, header, ([i] + list(matrix[i]) for i in range(size)))


def write_legendre_csv(path: Path, grid: TorusGrid, velocities: np.ndarray, lagrangian: np.ndarray,
                       momenta: np.ndarray) -> Path:
    """One row per (node, velocity): coordinates, velocity, L and the maximizing momentum."""
    nodes = grid.nodes()
    d = grid.dim
    header = ["node"] + _coordinate_header(grid) + [f"v{a + 1}" for a in range(d)] + ["L"] + \
        [f"p{a + 1}" for a in range(d)]
    rows = []
    for i in range(grid.size):
        for j in range(velocities.shape[0]):
            rows.append([i, *nodes[i], *velocities[j], lagrangian[i, j], *momenta[i, j]])
    return write_csv(path, header, rows)


def write_critical_value_csv(path: Path, c: float, c_upper, cycle_mean: float, t: float, n: int) -> Path:
    return write_csv(path, ["c", "c_upper", "cycle_mean", "t", "n"],
                     [[c, "" if c_upper is None else c_upper, cycle_mean, t, n]])


def write_weak_kam_csv(path: Path, result: WeakKamResult) -> Path:
    grid = result.u_minus.grid
    nodes = grid.nodes()
    return write_csv(path, ["node"] + _coordinate_header(grid) + ["u_minus", "u_plus"],
                     ([i, *nodes[i], result.u_minus.values[i], result.u_plus.values[i]] for i in range(grid.size)))


def write_aubry_csv(path: Path, mask: GridMask) -> Path:
    nodes = mask.grid.nodes()
    return write_csv(path, ["node"] + _coordinate_header(mask.grid), ([i, *nodes[i]] for i in mask.indices()))


def write_phi_csv(path: Path, phi: GridField, table: BranchTable) -> Path:
    q = phi.grid.nodes()[:, 0]
    dphi = central_gradient(phi)[:, 0]
    counts = table.branch_counts()
    return write_csv(path, ["node", "q", "phi", "dphi", "branch_count"],
                     ([i, q[i], phi.values[i], dphi[i], counts[i]] for i in range(phi.grid.size)))


def write_trajectory_csv(path: Path, trajectory: Trajectory) -> Path:
    d = trajectory.q.shape[1]
    header = ["t"] + [f"q{a + 1}" for a in range(d)] + [f"p{a + 1}" for a in range(d)]
    return write_csv(path, header, ([trajectory.times[k], *trajectory.q[k], *trajectory.p[k]]
                                    for k in range(len(trajectory))))


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


def plot_weak_kam(path: Path, result: WeakKamResult) -> Path:
    """u_minus and u_plus along the circle (first axis for d = 2)."""
    grid = result.u_minus.grid
    q = grid.nodes()[:, 0]
    rows = slice(None) if grid.dim == 1 else slice(0, grid.size, grid.n)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(q[rows], result.u_minus.values[rows], label="u_-")
    ax.plot(q[rows], result.u_plus.values[rows], "--", label="u_+")
    ax.set_xlabel("q")
    ax.set_title(f"weak KAM pair, c = {result.c:.6f}")
    ax.legend()
    return _save(fig, path)


def plot_barrier_slices(path: Path, B: BarrierResult, slices: int = 4) -> Path:
    """h(q0, .) for a few equally spaced base nodes."""
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.arange(B.grid.size)
    for i in np.linspace(0, B.grid.size, slices, endpoint=False).astype(int):
        ax.plot(x, B.h[i], label=f"h({i}, .)")
    ax.set_xlabel("node")
    ax.set_title(f"Peierls barrier, {B.aubry_mask.count()} Aubry nodes")
    ax.legend()
    return _save(fig, path)


def plot_selector(path: Path, phi: GridField, table: BranchTable, curve: LagrangianCurve) -> Path:
    """Branch values S_k over every node and the selected envelope Phi; the curve itself below."""
    q = phi.grid.nodes()[:, 0]
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    for i, values in enumerate(table.values):
        top.plot(np.full(values.size, q[i]), values, ".", color="0.6", markersize=2)
    top.plot(q, phi.values, color="C0", label="Phi")
    top.legend()
    bottom.plot(curve.q, curve.p, ".", markersize=1, color="0.4")
    bottom.plot(q, central_gradient(phi)[:, 0], color="C1", label="dPhi")
    bottom.set_xlabel("q")
    bottom.legend()
    return _save(fig, path)
