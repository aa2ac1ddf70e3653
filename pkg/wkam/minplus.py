"""
Discrete action kernels and min-plus linear algebra.

Convention: K[j][i] approximates A_t(node j, node i), the minimal action to go from
node j to node i in time t. Then

    (T_t^- u)_i = min_j (u_j + K[j][i])
    (T_t^+ u)_i = max_j (u_j - K[i][j])

Ties always resolve to the lowest node index.
"""

import itertools
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from wkam.errors import ErrorCode, WkamError
from wkam.events import EventLog, EventType, emit
from wkam.systems import HamiltonianSpec, lagrangian_batch
from wkam.torus import GridField, TorusGrid, wrap

CACHE_MAGIC = b"WKAM1"
_HEADER = struct.Struct("<5siidii")
TAU_MAX = 1.0
FAR = 1e300
_ROW_BLOCK = 16


@dataclass(frozen=True)
class ActionKernel:
    """Approximate A_t on grid nodes: the m-fold min-plus power of the one-step kernel at t/m."""

    grid: TorusGrid
    t: float
    entries: np.ndarray
    winding: int = 2
    substeps: int = 1

    def __post_init__(self) -> None:
        entries = np.ascontiguousarray(self.entries, dtype=float)
        if entries.shape != (self.grid.size, self.grid.size):
            raise ValueError(f"kernel must be {self.grid.size}x{self.grid.size}, got {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("kernel entries must be finite")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def size(self) -> int:
        return self.grid.size

    def shifted(self, shift: float) -> "ActionKernel":
        """K + shift, the kernel normalized by a drift c*t."""
        return ActionKernel(self.grid, self.t, self.entries + shift, self.winding, self.substeps)


KernelLike = Union[ActionKernel, np.ndarray]


def _entries(K: KernelLike) -> np.ndarray:
    return K.entries if isinstance(K, ActionKernel) else np.asarray(K, dtype=float)


def _row_blocks(rows: int) -> List[slice]:
    return [slice(s, min(s + _ROW_BLOCK, rows)) for s in range(0, rows, _ROW_BLOCK)]


def _run_blocks(fn, blocks, threads: int) -> list:
    if threads <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, blocks))


def identity_kernel(size: int) -> np.ndarray:
    """Min-plus identity: 0 on the diagonal, effectively +inf elsewhere."""
    eye = np.full((size, size), FAR)
    np.fill_diagonal(eye, 0.0)
    return eye


def check_resolution(spec: HamiltonianSpec, grid: TorusGrid, t: float, m: int, p_max: float = 10.0) -> float:
    """Validate the substep tau = t/m and return it."""
    tau = t / m
    reach = 0.5 * math.sqrt(grid.dim) / tau
    if tau > TAU_MAX:
        raise WkamError(ErrorCode.RESOLUTION, f"substep t/m={tau:.4g} exceeds {TAU_MAX}; raise m", tau=tau)
    if reach > p_max:
        raise WkamError(ErrorCode.RESOLUTION,
                        f"one-step reach velocity {reach:.4g} leaves the fiber window {p_max}; lower m",
                        tau=tau, reach=reach)
    return tau


def _one_step_kernel(spec: HamiltonianSpec, grid: TorusGrid, tau: float, W: int, threads: int) -> np.ndarray:
    nodes = grid.nodes()
    windings = np.array(list(itertools.product(range(-W, W + 1), repeat=grid.dim)), dtype=float)

    def rows(block: slice) -> np.ndarray:
        src = nodes[block]
        # displacement of every lifted segment (source, target, winding)
        delta = (nodes[None, :, None, :] - src[:, None, None, :]) + windings[None, None, :, :]
        mid = wrap(src[:, None, None, :] + 0.5 * delta)
        flat = delta.shape[:-1]
        lag, _ = lagrangian_batch(spec, mid.reshape(-1, grid.dim), (delta / tau).reshape(-1, grid.dim))
        return (tau * lag.reshape(flat)).min(axis=-1)

    return np.vstack(_run_blocks(rows, _row_blocks(grid.size), threads))


def minplus_product(A: np.ndarray, B: np.ndarray, threads: int = 1) -> np.ndarray:
    """(A (x) B)[j][i] = min_k (A[j][k] + B[k][i])."""
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"shape mismatch {A.shape} x {B.shape}")

    def rows(block: slice) -> np.ndarray:
        return (A[block, :, None] + B[None, :, :]).min(axis=1)

    return np.vstack(_run_blocks(rows, _row_blocks(A.shape[0]), threads))


def assemble_kernel(spec: HamiltonianSpec, grid: TorusGrid, t: float, W: int = 2, m: Optional[int] = None,
                    threads: int = 1, p_max: float = 10.0, event_log: Optional[EventLog] = None) -> ActionKernel:
    """One-step midpoint rule at tau = t/m, then m-1 min-plus self-compositions."""
    if t <= 0 or W < 1:
        raise ValueError(f"need t > 0 and W >= 1, got t={t}, W={W}")
    if m is None:
        m = max(1, math.ceil(t / 0.1 - 1e-12))
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    if spec.dim != grid.dim:
        raise ValueError("Hamiltonian and grid dimensions differ")
    tau = check_resolution(spec, grid, t, m, p_max)

    step = _one_step_kernel(spec, grid, tau, W, threads)
    entries = step
    for _ in range(m - 1):
        entries = minplus_product(entries, step, threads)

    resting, _ = lagrangian_batch(spec, grid.nodes(), np.zeros((grid.size, grid.dim)))
    bound = t * float(np.max(resting)) + 1e-9 * (1 + t)
    if np.max(np.diag(entries)) > bound:
        raise WkamError(ErrorCode.RESOLUTION, "diagonal exceeds the resting action bound",
                        diagonal=float(np.max(np.diag(entries))), bound=bound)
    emit(event_log, EventType.KERNEL_ASSEMBLED, "minplus", n=grid.n, d=grid.dim, t=t, W=W, m=m)
    return ActionKernel(grid, t, entries, W, m)


def minplus_matvec(K: KernelLike, u: Union[GridField, np.ndarray], sign: str = "-") -> Union[GridField, np.ndarray]:
    """Apply T_t^- (sign '-') or T_t^+ (sign '+') through the kernel."""
    entries = _entries(K)
    values = u.values if isinstance(u, GridField) else np.asarray(u, dtype=float)
    if entries.shape != (values.size, values.size):
        raise ValueError(f"kernel {entries.shape} does not match field of size {values.size}")
    if sign == "-":
        out = (values[:, None] + entries).min(axis=0)
    elif sign == "+":
        out = (values[None, :] - entries).max(axis=1)
    else:
        raise ValueError(f"sign must be '-' or '+', got {sign!r}")
    return GridField(u.grid, out) if isinstance(u, GridField) else out


def minplus_argmin(K: KernelLike, u: np.ndarray) -> np.ndarray:
    """For each target i, the lowest source j attaining min_j (u_j + K[j][i])."""
    return np.argmin(np.asarray(u, dtype=float)[:, None] + _entries(K), axis=0)


def minplus_matmul(K1: KernelLike, K2: KernelLike, threads: int = 1) -> KernelLike:
    """Compose kernels; horizons add."""
    product = minplus_product(_entries(K1), _entries(K2), threads)
    if isinstance(K1, ActionKernel) and isinstance(K2, ActionKernel):
        if K1.grid != K2.grid:
            raise ValueError("kernels live on different grids")
        return ActionKernel(K1.grid, K1.t + K2.t, product, K1.winding, K1.substeps + K2.substeps)
    return product


def kernel_power(K: ActionKernel, k: int, threads: int = 1) -> ActionKernel:
    """K^(x)k as a left fold."""
    if k < 1:
        raise ValueError("power must be at least 1")
    out = K
    for _ in range(k - 1):
        out = minplus_matmul(out, K, threads)
    return out


def karp_min_mean_cycle(K: KernelLike) -> float:
    """Minimum cycle mean of the complete digraph with weights K[j][i] on j -> i."""
    entries = _entries(K)
    n = entries.shape[0]
    D = np.empty((n + 1, n))
    D[0] = 0.0
    for k in range(1, n + 1):
        D[k] = (D[k - 1][:, None] + entries).min(axis=0)
    ks = np.arange(n)[:, None]
    ratios = (D[n][None, :] - D[:n]) / (n - ks)
    return float(np.min(np.max(ratios, axis=0)))


def power_cycle_mean(K: KernelLike, iterations: int = 4000, max_period: int = 840) -> float:
    """Cycle mean from the eventual periodicity x_{k+p} = x_k + p*lambda of power iteration."""
    entries = _entries(K)
    x = np.zeros(entries.shape[0])
    history = [x]
    for _ in range(iterations):
        x = (x[:, None] + entries).min(axis=0)
        history.append(x)
    last = history[-1]
    for period in range(1, min(max_period, iterations) + 1):
        shift = last - history[-1 - period]
        if np.ptp(shift) <= 1e-9 * (1 + np.max(np.abs(shift))):
            return float(shift.mean() / period)
    raise WkamError(ErrorCode.NO_STABILIZE, "power iteration shows no periodic regime", iterations=iterations)


def system_fingerprint(spec: HamiltonianSpec) -> str:
    """One line naming the Hamiltonian a kernel was assembled for."""
    modes = ";".join(f"{','.join(str(k) for k in mode.k)}:{mode.a!r}:{mode.b!r}" for mode in spec.series.modes)
    return f"{spec.family.value} d={spec.dim} name={spec.name} modes={modes}"


def _system_path(path: Union[str, Path]) -> Path:
    return Path(f"{path}.system")


def save_kernel(path: Union[str, Path], K: ActionKernel, system: Optional[str] = None) -> None:
    """Binary cache: header then row-major little-endian float64 entries.

    With ``system`` the fingerprint of the Hamiltonian goes to a ``.system`` file next to it.
    """
    header = _HEADER.pack(CACHE_MAGIC, K.grid.dim, K.grid.n, float(K.t), K.winding, K.substeps)
    with open(path, "wb") as f:
        f.write(header)
        f.write(K.entries.astype("<f8").tobytes())
    if system is not None:
        _system_path(path).write_text(system + "\n")


def read_cache_system(path: Union[str, Path]) -> Optional[str]:
    sidecar = _system_path(path)
    return sidecar.read_text().strip() if sidecar.exists() else None


def read_cache_header(path: Union[str, Path]) -> dict:
    with open(path, "rb") as f:
        raw = f.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise WkamError(ErrorCode.CACHE_FORMAT, f"{path}: truncated header")
    magic, d, n, t, W, m = _HEADER.unpack(raw)
    if magic != CACHE_MAGIC:
        raise WkamError(ErrorCode.CACHE_FORMAT, f"{path}: bad magic {magic!r}")
    return {"d": d, "n": n, "t": t, "W": W, "m": m}


def load_kernel(path: Union[str, Path], offset: float = 0.0) -> ActionKernel:
    header = read_cache_header(path)
    grid = TorusGrid(header["d"], header["n"], offset)
    with open(path, "rb") as f:
        f.seek(_HEADER.size)
        data = np.frombuffer(f.read(), dtype="<f8")
    if data.size != grid.size * grid.size:
        raise WkamError(ErrorCode.CACHE_FORMAT, f"{path}: expected {grid.size ** 2} entries, found {data.size}")
    return ActionKernel(grid, header["t"], data.reshape(grid.size, grid.size).astype(float),
                        header["W"], header["m"])


def load_or_assemble(path: Optional[Union[str, Path]], spec: HamiltonianSpec, grid: TorusGrid, t: float,
                     W: int, m: int, threads: int = 1, event_log: Optional[EventLog] = None) -> ActionKernel:
    """Use the cache at ``path`` when its header and Hamiltonian match, else assemble and write it."""
    system = system_fingerprint(spec)
    if path is not None and Path(path).exists():
        header = read_cache_header(path)
        same_grid = (header["d"], header["n"], header["t"], header["W"], header["m"]) == (grid.dim, grid.n, t, W, m)
        if same_grid and read_cache_system(path) == system:
            emit(event_log, EventType.KERNEL_CACHE_HIT, "minplus", path=str(path))
            return load_kernel(path, grid.offset)
    K = assemble_kernel(spec, grid, t, W, m, threads, event_log=event_log)
    if path is not None:
        save_kernel(path, K, system)
    return K
