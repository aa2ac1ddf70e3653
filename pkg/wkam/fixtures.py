"""
Built-in systems and curves with closed-form answers.
"""

from typing import Tuple

import numpy as np

from wkam.selector import LagrangianCurve
from wkam.systems import TWO_PI, FourierMode, FourierSeries, HamiltonianSpec, adapted
from wkam.torus import GridField, TorusGrid

# u = 0.05 sin(2 pi q) + 0.01 cos(4 pi q)
ADAPTED_MODES = (FourierMode((1,), 0.0, 0.05), FourierMode((2,), 0.01, 0.0))
ADAPTED_MODES_2D = (FourierMode((1, 0), 0.0, 0.03), FourierMode((1, 1), 0.01, 0.0))

FOLD_AMPLITUDE = 0.25
FOLD_MOMENTUM = 0.4


def adapted_fixture(dim: int = 1) -> HamiltonianSpec:
    return adapted(ADAPTED_MODES if dim == 1 else ADAPTED_MODES_2D, dim, f"adapted{dim}d")


def _uniform(samples: int) -> np.ndarray:
    return np.arange(samples) / samples


def graph_curve(series: FourierSeries, samples: int = 512) -> LagrangianCurve:
    """The curve p = u'(q) over uniformly spaced q."""
    q = _uniform(samples)
    return LagrangianCurve(q, series.gradient(q[:, None])[:, 0])


def zero_section(samples: int = 512) -> LagrangianCurve:
    return LagrangianCurve(_uniform(samples), np.zeros(samples))


def circle(momentum: float = 0.3, samples: int = 512) -> LagrangianCurve:
    """p = const, invariant under the free flow but not exact unless the constant is 0."""
    return LagrangianCurve(_uniform(samples), np.full(samples, momentum))


def fold_curve(samples: int = 512, amplitude: float = FOLD_AMPLITUDE,
               momentum: float = FOLD_MOMENTUM) -> LagrangianCurve:
    """q = s + a sin(2 pi s), p = b sin(2 pi s): exact, with two folds when a > 1/(2 pi)."""
    s = _uniform(samples)
    return LagrangianCurve(s + amplitude * np.sin(TWO_PI * s), momentum * np.sin(TWO_PI * s))


def fold_primitive(s: np.ndarray, amplitude: float = FOLD_AMPLITUDE, momentum: float = FOLD_MOMENTUM) -> np.ndarray:
    """Exact integral of p dq from s = 0 along the fold curve."""
    s = np.asarray(s, dtype=float)
    return momentum * ((1 - np.cos(TWO_PI * s)) / TWO_PI
                       + amplitude * np.pi * (1 - np.cos(2 * TWO_PI * s)) / (2 * TWO_PI))


def pendulum_level_curve(energy: float = 2.0, samples: int = 512) -> LagrangianCurve:
    """Upper rotational level {p^2/2 + cos(2 pi q) = energy}, energy > 1."""
    q = _uniform(samples)
    return LagrangianCurve(q, np.sqrt(2.0 * (energy - np.cos(TWO_PI * q))))


def graph_field(spec: HamiltonianSpec, grid: TorusGrid) -> Tuple[GridField, np.ndarray]:
    """The generating u of an adapted Hamiltonian on ``grid`` and its exact differential."""
    nodes = grid.nodes()
    return GridField(grid, spec.series.value(nodes)), spec.series.gradient(nodes)
