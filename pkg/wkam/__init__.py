"""
Weak KAM Toolkit

Numerical weak KAM theory on tori: action kernels, critical values, weak KAM
solutions, Peierls barriers, function selectors and a graph verifier for invariant
exact Lagrangian curves.
"""

from wkam.errors import ErrorCode, WkamError
from wkam.systems import HamiltonianSpec, Family, FourierMode
from wkam.torus import TorusGrid, GridField, GridMask, PhasePoint
from wkam.minplus import ActionKernel, assemble_kernel
from wkam.weakkam import WeakKamResult, BarrierResult, critical_value, solve_weak_kam, peierls_barrier
from wkam.selector import LagrangianCurve, BranchTable
from wkam.verifier import Verdict, VerifierReport, verify_birkhoff, verify_graph_field
from wkam.config import VerifierConfig

__all__ = [
    "ErrorCode",
    "WkamError",
    "HamiltonianSpec",
    "Family",
    "FourierMode",
    "TorusGrid",
    "GridField",
    "GridMask",
    "PhasePoint",
    "ActionKernel",
    "assemble_kernel",
    "WeakKamResult",
    "BarrierResult",
    "critical_value",
    "solve_weak_kam",
    "peierls_barrier",
    "LagrangianCurve",
    "BranchTable",
    "Verdict",
    "VerifierReport",
    "verify_birkhoff",
    "verify_graph_field",
    "VerifierConfig",
]
