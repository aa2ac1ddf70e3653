"""
Numerical configuration settings.
"""

import math
from dataclasses import dataclass, fields
from typing import Optional

from wkam.errors import ErrorCode, WkamError


def _require_positive(obj) -> None:
    for f in fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, bool) or value is None:
            continue
        if isinstance(value, (int, float)) and value <= 0:
            raise WkamError(ErrorCode.CONFIG, f"{type(obj).__name__}.{f.name} must be positive, got {value}")


@dataclass
class FlowConfig:
    """Hamiltonian flow integration settings."""

    p_max: float = 10.0
    dt: float = 1e-3

    def __post_init__(self) -> None:
        _require_positive(self)


@dataclass
class KernelConfig:
    """Action kernel assembly settings."""

    t: float = 0.5
    winding: int = 2
    substeps: Optional[int] = None
    threads: int = 1

    def __post_init__(self) -> None:
        _require_positive(self)
        if self.substeps is None:
            # keeps t/m <= 0.1
            self.substeps = max(1, math.ceil(self.t / 0.1 - 1e-12))


@dataclass
class SolverConfig:
    """Weak KAM value iteration settings."""

    tol: float = 1e-6
    max_iter: int = 20000
    base: int = 0

    def __post_init__(self) -> None:
        if self.tol <= 0 or self.max_iter <= 0 or self.base < 0:
            raise WkamError(ErrorCode.CONFIG, f"invalid solver settings: {self}")


@dataclass
class BarrierConfig:
    """Peierls barrier power iteration settings."""

    tol: float = 1e-6
    window: int = 16
    max_powers: int = 400
    aubry_tol: Optional[float] = None

    def __post_init__(self) -> None:
        _require_positive(self)

    def aubry_tolerance(self, n: int) -> float:
        """Aubry tolerance, scaled with the grid error when not set."""
        return self.aubry_tol if self.aubry_tol is not None else 5.0 / n


@dataclass
class SelectorConfig:
    """Function selector verification settings."""

    dist_tol: Optional[float] = None
    val_tol: float = 1e-3
    kink_factor: float = 10.0

    def __post_init__(self) -> None:
        _require_positive(self)

    def distance_tolerance(self, n: int) -> float:
        return self.dist_tol if self.dist_tol is not None else 4.0 / n

    def kink_threshold(self, n: int) -> float:
        return self.kink_factor / n


@dataclass
class VerifierConfig:
    """Stage tolerances and horizons of the graph verifier."""

    n: int = 128
    kernel: KernelConfig = None
    solver: SolverConfig = None
    barrier: BarrierConfig = None
    selector: SelectorConfig = None
    flow: FlowConfig = None

    exact_tol: float = 1e-6
    level_tol: float = 1e-6
    invariance_T: float = 2.0
    invariance_dt: float = 2e-3
    invariance_tol: float = 1e-4
    invariance_samples: int = 64
    k_c_tol: float = 1e-3
    domination_tol: float = 1e-3
    omega_T: float = 50.0
    omega_dt: float = 1e-2
    recur_tol: float = 0.05
    nonwandering_T: float = 5.0
    action_tol: float = 1e-4
    barrier_ineq_tol: float = 1e-3
    sampled_nodes: int = 16
    graph_tol: Optional[float] = None
    refinement_tol: Optional[float] = None

    def __post_init__(self) -> None:
        self.kernel = self.kernel or KernelConfig()
        self.solver = self.solver or SolverConfig()
        self.barrier = self.barrier or BarrierConfig()
        self.selector = self.selector or SelectorConfig()
        self.flow = self.flow or FlowConfig()
        _require_positive(self)

    def graph_tolerance(self, n: int) -> float:
        return self.graph_tol if self.graph_tol is not None else 2.0 / n

    def refinement_tolerance(self, n: int) -> float:
        return self.refinement_tol if self.refinement_tol is not None else 20.0 / n
