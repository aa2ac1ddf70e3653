"""
Run configuration read from INI files.

Sections: [hamiltonian], [grid], [kernel], [tolerances], [curve], [output].
"""

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

from wkam.config import (
    BarrierConfig,
    FlowConfig,
    KernelConfig,
    SelectorConfig,
    SolverConfig,
    VerifierConfig,
)
from wkam.errors import ErrorCode, WkamError
from wkam.selector import LagrangianCurve, read_curve_csv
from wkam import fixtures
from wkam.systems import FourierMode, HamiltonianSpec, adapted, free, mechanical, pendulum
from wkam.torus import TorusGrid

OUTPUT_ENV = "WKAM_OUT"

# [tolerances] keys that map onto VerifierConfig fields of the same name
VERIFIER_KEYS = (
    "exact_tol", "level_tol", "invariance_T", "invariance_dt", "invariance_tol", "invariance_samples",
    "k_c_tol", "domination_tol", "omega_T", "omega_dt", "recur_tol", "nonwandering_T", "action_tol",
    "barrier_ineq_tol", "sampled_nodes", "graph_tol", "refinement_tol",
)
INT_KEYS = ("invariance_samples", "sampled_nodes", "max_iter", "window", "max_powers")


def parse_modes(text: str, dim: int) -> Tuple[FourierMode, ...]:
    """Parse ``k:a:b`` terms (``k1,k2:a:b`` in two dimensions) separated by ``;``."""
    modes = []
    for term in filter(None, (t.strip() for t in text.split(";"))):
        parts = term.split(":")
        if len(parts) != 3:
            raise WkamError(ErrorCode.CONFIG, f"bad Fourier term {term!r}, expected k:a:b")
        k = tuple(int(x) for x in parts[0].split(","))
        if len(k) != dim:
            raise WkamError(ErrorCode.CONFIG, f"Fourier term {term!r} does not have {dim} frequencies")
        modes.append(FourierMode(k, float(parts[1]), float(parts[2])))
    return tuple(modes)


@dataclass
class CurveSource:
    """Where the candidate curve comes from: a CSV file or a built-in fixture."""

    path: Optional[Path] = None
    builtin: Optional[str] = None
    momentum: float = 0.3
    energy: float = 2.0
    samples: int = 512

    def load(self, spec: HamiltonianSpec) -> LagrangianCurve:
        if self.path is not None:
            return read_curve_csv(self.path)
        if self.builtin == "graph":
            return fixtures.graph_curve(spec.series, self.samples)
        if self.builtin == "zero_section":
            return fixtures.zero_section(self.samples)
        if self.builtin == "circle":
            return fixtures.circle(self.momentum, self.samples)
        if self.builtin == "fold":
            return fixtures.fold_curve(self.samples)
        if self.builtin == "pendulum_level":
            return fixtures.pendulum_level_curve(self.energy, self.samples)
        raise WkamError(ErrorCode.CONFIG, "no curve configured: set [curve] path or builtin")


@dataclass
class RunConfig:
    """Everything one command needs: system, grid, numerics, curve and outputs."""

    spec: HamiltonianSpec
    n: int = 128
    d: int = 1
    kernel: KernelConfig = field(default_factory=KernelConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    barrier: BarrierConfig = field(default_factory=BarrierConfig)
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    verifier_overrides: Dict[str, float] = field(default_factory=dict)
    kernel_cache: Optional[Path] = None
    curve: CurveSource = field(default_factory=CurveSource)
    output_dir: Path = Path("wkam_out")
    plot: bool = False

    def __post_init__(self) -> None:
        if self.n < 8 or self.n & (self.n - 1):
            raise WkamError(ErrorCode.CONFIG, f"grid size n must be a power of two >= 8, got {self.n}")
        if self.d != self.spec.dim:
            raise WkamError(ErrorCode.CONFIG, f"grid dimension {self.d} differs from Hamiltonian dimension "
                                              f"{self.spec.dim}")

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.d, self.n)

    def verifier_config(self) -> VerifierConfig:
        return VerifierConfig(n=self.n, kernel=self.kernel, solver=self.solver, barrier=self.barrier,
                              selector=self.selector, flow=self.flow, **self.verifier_overrides)


def _build_spec(section: configparser.SectionProxy, dim: int) -> HamiltonianSpec:
    family = section.get("family", "mechanical").strip().lower()
    modes = parse_modes(section.get("modes", ""), dim)
    name = section.get("name", "")
    if family == "free":
        return free(dim)
    if family == "pendulum":
        return pendulum()
    if family == "mechanical":
        return mechanical(modes, dim, name)
    if family == "adapted":
        return adapted(modes or (fixtures.ADAPTED_MODES if dim == 1 else fixtures.ADAPTED_MODES_2D), dim, name)
    raise WkamError(ErrorCode.CONFIG, f"unknown Hamiltonian family {family!r}")


def _number(section, key: str):
    raw = section.get(key)
    try:
        return int(raw) if key in INT_KEYS else float(raw)
    except ValueError:
        raise WkamError(ErrorCode.CONFIG, f"[{section.name}] {key} is not a number: {raw!r}")


def load_run_config(path, overrides: Optional[Dict[str, object]] = None) -> RunConfig:
    """Read an INI run configuration; ``WKAM_OUT`` overrides [output] directory."""
    path = Path(path)
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if not parser.read(path):
        raise WkamError(ErrorCode.CONFIG, f"cannot read config file {path}")
    for name in ("hamiltonian", "grid", "kernel", "tolerances", "curve", "output"):
        if not parser.has_section(name):
            parser.add_section(name)

    grid = parser["grid"]
    d = grid.getint("d", 1)
    spec = _build_spec(parser["hamiltonian"], d)

    kernel = parser["kernel"]
    kernel_config = KernelConfig(
        t=kernel.getfloat("t", 0.5),
        winding=kernel.getint("W", 2),
        substeps=kernel.getint("m") if "m" in kernel else None,
        threads=kernel.getint("threads", 1),
    )
    cache = kernel.get("cache")

    tol = parser["tolerances"]
    solver = SolverConfig(tol=tol.getfloat("solver_tol", 1e-6), max_iter=tol.getint("max_iter", 20000))
    barrier = BarrierConfig(
        tol=tol.getfloat("barrier_tol", 1e-6),
        window=tol.getint("window", 16),
        max_powers=tol.getint("max_powers", 400),
        aubry_tol=tol.getfloat("aubry_tol") if "aubry_tol" in tol else None,
    )
    selector_config = SelectorConfig(
        dist_tol=tol.getfloat("dist_tol") if "dist_tol" in tol else None,
        val_tol=tol.getfloat("val_tol", 1e-3),
        kink_factor=tol.getfloat("kink_factor", 10.0),
    )
    flow = FlowConfig(p_max=tol.getfloat("p_max", 10.0), dt=tol.getfloat("dt", 1e-3))
    verifier_overrides = {key: _number(tol, key) for key in VERIFIER_KEYS if key in tol}

    curve = parser["curve"]
    curve_path = curve.get("path")
    source = CurveSource(
        path=(path.parent / curve_path) if curve_path else None,
        builtin=curve.get("builtin"),
        momentum=curve.getfloat("momentum", 0.3),
        energy=curve.getfloat("energy", 2.0),
        samples=curve.getint("samples", 512),
    )

    output = parser["output"]
    output_dir = os.environ.get(OUTPUT_ENV) or output.get("directory", "wkam_out")

    config = RunConfig(
        spec=spec,
        n=grid.getint("n", 128),
        d=d,
        kernel=kernel_config,
        solver=solver,
        barrier=barrier,
        selector=selector_config,
        flow=flow,
        verifier_overrides=verifier_overrides,
        kernel_cache=(path.parent / cache) if cache else None,
        curve=source,
        output_dir=Path(output_dir),
        plot=output.getboolean("plot", False),
    )
    for key, value in (overrides or {}).items():
        setattr(config, key, value)
    return config
