"""
Periodic grids on the unit torus and the fields that live on them.
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy import ndimage


def wrap(q: np.ndarray) -> np.ndarray:
    """Reduce positions to [0, 1)."""
    q = np.asarray(q, dtype=float)
    out = q - np.floor(q)
    # floor can round 1 - eps up to exactly 1
    return np.where(out >= 1.0, 0.0, out)


def wrap_displacement(dq: np.ndarray) -> np.ndarray:
    """Reduce displacements to the shortest representative in [-1/2, 1/2)."""
    dq = np.asarray(dq, dtype=float)
    return dq - np.floor(dq + 0.5)


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid of n points per axis on T^d = [0, 1)^d."""

    dim: int
    n: int
    offset: float = 0.0

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {self.dim}")
        if self.n < 8:
            raise ValueError(f"grid needs at least 8 points per axis, got {self.n}")

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @property
    def size(self) -> int:
        """Total number of nodes, n^d."""
        return self.n ** self.dim

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (n^d, d), row-major over axes."""
        axis = wrap((np.arange(self.n) + self.offset) / self.n)
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def node(self, index: int) -> np.ndarray:
        return self.nodes()[index % self.size]

    def multi_index(self, index: int) -> tuple:
        return np.unravel_index(index % self.size, self.shape)

    def flat_index(self, multi: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(i) % self.n for i in multi), self.shape))

    def nearest_node(self, q: np.ndarray) -> int:
        """Index of the node closest to a torus position."""
        q = wrap(np.atleast_1d(q))
        multi = np.rint(q * self.n - self.offset).astype(int) % self.n
        return self.flat_index(multi)

    def refined(self) -> "TorusGrid":
        """The grid with halved spacing; every node of self is a node of the result."""
        return TorusGrid(self.dim, 2 * self.n, 2 * self.offset)


@dataclass(frozen=True)
class PhasePoint:
    """A point (q, p) of T*T^d."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", wrap(np.atleast_1d(np.asarray(self.q, dtype=float))))
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))
        if self.q.shape != self.p.shape:
            raise ValueError("q and p must have the same dimension")

    def distance(self, other: "PhasePoint") -> float:
        """Phase-space distance with the periodic q metric."""
        dq = wrap_displacement(self.q - other.q)
        return float(np.sqrt(np.sum(dq ** 2) + np.sum((self.p - other.p) ** 2)))


class GridField:
    """A real function sampled at every node of a TorusGrid."""

    def __init__(self, grid: TorusGrid, values: np.ndarray):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != grid.size:
            raise ValueError(f"field needs {grid.size} values, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.grid = grid
        self.values = values

    def __repr__(self) -> str:
        lo, hi = self.values.min(), self.values.max()
        return f"GridField(n={self.grid.n}, d={self.grid.dim}, range=[{lo:.4g}, {hi:.4g}])"

    def __len__(self) -> int:
        return self.values.size

    def rebased(self, base: int = 0) -> "GridField":
        """The same function shifted so that it vanishes at node ``base``."""
        return GridField(self.grid, self.values - self.values[base])

    def as_array(self) -> np.ndarray:
        """Values reshaped to the grid shape (n,) or (n, n)."""
        return self.values.reshape(self.grid.shape)

    def sup_distance(self, other: "GridField") -> float:
        return float(np.max(np.abs(self.values - other.values)))

    def interpolate(self, q: np.ndarray) -> np.ndarray:
        """Periodic multilinear interpolation at positions q of shape (N, d)."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        coords = (wrap(q) * self.grid.n - self.grid.offset).T
        return ndimage.map_coordinates(self.as_array(), coords, order=1, mode="grid-wrap")


class GridMask:
    """A boolean function on the nodes of a TorusGrid."""

    def __init__(self, grid: TorusGrid, values: np.ndarray, widened: bool = False):
        values = np.asarray(values, dtype=bool).reshape(-1)
        if values.size != grid.size:
            raise ValueError(f"mask needs {grid.size} values, got {values.size}")
        self.grid = grid
        self.values = values
        self.widened = widened

    def __repr__(self) -> str:
        return f"GridMask(n={self.grid.n}, d={self.grid.dim}, count={self.count()})"

    def indices(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.values)]

    def count(self) -> int:
        return int(self.values.sum())

    def is_full(self) -> bool:
        return bool(self.values.all())


def central_gradient(field: GridField) -> np.ndarray:
    """Central-difference gradient at every node, shape (n^d, d)."""
    arr = field.as_array()
    n = field.grid.n
    parts = [((np.roll(arr, -1, axis=a) - np.roll(arr, 1, axis=a)) * (n / 2.0)).ravel()
             for a in range(field.grid.dim)]
    return np.stack(parts, axis=-1)


def one_sided_gradients(field: GridField) -> tuple:
    """Forward and backward differences at every node, each shape (n^d, d)."""
    arr = field.as_array()
    n = field.grid.n
    forward = [((np.roll(arr, -1, axis=a) - arr) * n).ravel() for a in range(field.grid.dim)]
    backward = [((arr - np.roll(arr, 1, axis=a)) * n).ravel() for a in range(field.grid.dim)]
    return np.stack(forward, axis=-1), np.stack(backward, axis=-1)


def differentiable_mask(field: GridField, kink_threshold: float) -> GridMask:
    """Nodes where forward and backward differences agree within ``kink_threshold`` on every axis."""
    forward, backward = one_sided_gradients(field)
    ok = np.all(np.abs(forward - backward) <= kink_threshold, axis=-1)
    return GridMask(field.grid, ok)
