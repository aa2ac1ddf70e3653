"""
Tonelli Hamiltonians on T*T^d, their Lagrangians and their flows.

All array arguments are batched: positions and momenta have shape (N, d).
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from wkam.errors import ErrorCode, WkamError
from wkam.torus import PhasePoint, wrap

TWO_PI = 2.0 * np.pi

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 60


class Family(Enum):
    """Built-in Hamiltonian families."""

    MECHANICAL = "mechanical"
    ADAPTED = "adapted"
    CUSTOM = "custom"


@dataclass(frozen=True)
class FourierMode:
    """One term a*cos(2*pi*k.q) + b*sin(2*pi*k.q)."""

    k: Tuple[int, ...]
    a: float = 0.0
    b: float = 0.0


@dataclass(frozen=True)
class FourierSeries:
    """Truncated real Fourier series on T^d."""

    dim: int
    modes: Tuple[FourierMode, ...] = ()

    def __post_init__(self) -> None:
        for mode in self.modes:
            if len(mode.k) != self.dim:
                raise ValueError(f"mode {mode.k} does not match dimension {self.dim}")

    def _phases(self, q: np.ndarray):
        ks = np.array([m.k for m in self.modes], dtype=float).reshape(-1, self.dim)
        a = np.array([m.a for m in self.modes], dtype=float)
        b = np.array([m.b for m in self.modes], dtype=float)
        theta = TWO_PI * (np.atleast_2d(q) @ ks.T)
        return ks, a, b, np.cos(theta), np.sin(theta)

    def value(self, q: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(q)
        if not self.modes:
            return np.zeros(q.shape[0])
        _, a, b, c, s = self._phases(q)
        return c @ a + s @ b

    def gradient(self, q: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(q)
        if not self.modes:
            return np.zeros_like(q, dtype=float)
        ks, a, b, c, s = self._phases(q)
        return TWO_PI * ((-s * a + c * b) @ ks)

    def hessian(self, q: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(q)
        if not self.modes:
            return np.zeros(q.shape + (self.dim,))
        ks, a, b, c, s = self._phases(q)
        weights = -(TWO_PI ** 2) * (c * a + s * b)
        return np.einsum("nm,mi,mj->nij", weights, ks, ks)

    def max_abs_gradient(self) -> float:
        """Upper bound on |grad| from the coefficients."""
        return float(sum(TWO_PI * np.linalg.norm(m.k) * np.hypot(m.a, m.b) for m in self.modes))


@dataclass
class HamiltonianSpec:
    """An evaluable Tonelli Hamiltonian with gradient access.

    MECHANICAL: H = |p|^2/2 + V(q), V = ``series``.
    ADAPTED:    H = |p - du(q)|^2/2, u = ``series``. Its graph {p = du} is invariant
                and made of fixed points.
    CUSTOM:     user callables, batched over (N, d) arrays.
    """

    family: Family
    dim: int = 1
    series: FourierSeries = None
    name: str = ""
    value_fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = field(default=None, repr=False)
    gradient_fn: Optional[Callable] = field(default=None, repr=False)
    fiber_hessian_fn: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.series is None:
            self.series = FourierSeries(self.dim)
        if self.family == Family.CUSTOM and (self.value_fn is None or self.gradient_fn is None):
            raise ValueError("custom Hamiltonians need value_fn and gradient_fn")
        if not self.name:
            self.name = self.family.value

    def value(self, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        q, p = np.atleast_2d(q), np.atleast_2d(p)
        if self.family == Family.MECHANICAL:
            return 0.5 * np.sum(p * p, axis=-1) + self.series.value(q)
        if self.family == Family.ADAPTED:
            w = p - self.series.gradient(q)
            return 0.5 * np.sum(w * w, axis=-1)
        return np.asarray(self.value_fn(q, p), dtype=float)

    def gradient(self, q: np.ndarray, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(dH/dq, dH/dp), each shaped like p."""
        q, p = np.atleast_2d(q), np.atleast_2d(p)
        if self.family == Family.MECHANICAL:
            return self.series.gradient(q), p.astype(float, copy=True)
        if self.family == Family.ADAPTED:
            w = p - self.series.gradient(q)
            return -np.einsum("nij,nj->ni", self.series.hessian(q), w), w
        hq, hp = self.gradient_fn(q, p)
        return np.asarray(hq, dtype=float), np.asarray(hp, dtype=float)

    def fiber_hessian(self, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        q, p = np.atleast_2d(q), np.atleast_2d(p)
        if self.family != Family.CUSTOM:
            return np.broadcast_to(np.eye(self.dim), p.shape + (self.dim,)).copy()
        if self.fiber_hessian_fn is not None:
            return np.asarray(self.fiber_hessian_fn(q, p), dtype=float)
        eps = 1e-6
        cols = []
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = eps
            _, plus = self.gradient(q, p + e)
            _, minus = self.gradient(q, p - e)
            cols.append((plus - minus) / (2 * eps))
        return np.stack(cols, axis=-1)

    def validate(self, p_max: float = 10.0, samples: int = 64) -> "HamiltonianSpec":
        """Check fiber convexity and superlinearity on the window |p| <= p_max by sampling."""
        rng = np.random.default_rng(0)
        q = rng.random((samples, self.dim))
        p = (rng.random((samples, self.dim)) * 2 - 1) * p_max
        try:
            np.linalg.cholesky(self.fiber_hessian(q, p))
        except np.linalg.LinAlgError:
            raise WkamError(ErrorCode.NOT_TONELLI, f"{self.name}: fiber Hessian is not positive definite")
        directions = rng.normal(size=(samples, self.dim))
        directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
        outer = self.value(q, p_max * directions) / p_max
        inner = self.value(q, 0.5 * p_max * directions) / (0.5 * p_max)
        if not np.all(outer > inner):
            raise WkamError(ErrorCode.NOT_TONELLI, f"{self.name}: H(q,p)/|p| is not growing on the window edge")
        return self


def mechanical(modes: Sequence[FourierMode] = (), dim: int = 1, name: str = "") -> HamiltonianSpec:
    """H = |p|^2/2 + V with V given by Fourier modes."""
    return HamiltonianSpec(Family.MECHANICAL, dim, FourierSeries(dim, tuple(modes)), name or "mechanical").validate()


def free(dim: int = 1) -> HamiltonianSpec:
    return mechanical((), dim, "free")


def pendulum() -> HamiltonianSpec:
    """H = p^2/2 + cos(2 pi q); c = max V = 1 at q = 0."""
    return mechanical((FourierMode((1,), 1.0, 0.0),), 1, "pendulum")


def adapted(modes: Sequence[FourierMode], dim: int = 1, name: str = "") -> HamiltonianSpec:
    """H = |p - du|^2/2 with u given by Fourier modes."""
    return HamiltonianSpec(Family.ADAPTED, dim, FourierSeries(dim, tuple(modes)), name or "adapted").validate()


def custom(value_fn, gradient_fn, dim: int = 1, fiber_hessian_fn=None, name: str = "custom") -> HamiltonianSpec:
    return HamiltonianSpec(Family.CUSTOM, dim, None, name, value_fn, gradient_fn, fiber_hessian_fn).validate()


def eval_H(spec: HamiltonianSpec, x: PhasePoint) -> float:
    return float(spec.value(x.q[None, :], x.p[None, :])[0])


def eval_gradient(spec: HamiltonianSpec, x: PhasePoint) -> Tuple[np.ndarray, np.ndarray]:
    hq, hp = spec.gradient(x.q[None, :], x.p[None, :])
    return hq[0], hp[0]


def lagrangian_batch(spec: HamiltonianSpec, q: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """L(q, v) = max_p (p.v - H(q, p)) by damped Newton, started at p = v.

    Returns (L, p*) where p* is the maximizing momentum.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    p = v.copy()
    active = np.ones(p.shape[0], dtype=bool)
    for _ in range(NEWTON_MAX_ITER):
        _, hp = spec.gradient(q[active], p[active])
        g = v[active] - hp
        done = np.max(np.abs(g), axis=-1) <= NEWTON_TOL
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        if not active.any():
            break
        idx, g = idx[~done], g[~done]
        qa, pa, va = q[idx], p[idx], v[idx]
        step = np.linalg.solve(spec.fiber_hessian(qa, pa), g[..., None])[..., 0]
        f_old = np.sum(pa * va, axis=-1) - spec.value(qa, pa)
        scale = np.ones(idx.size)
        for _ in range(30):
            trial = pa + scale[:, None] * step
            f_new = np.sum(trial * va, axis=-1) - spec.value(qa, trial)
            worse = f_new < f_old - 1e-14 * (1 + np.abs(f_old))
            if not worse.any():
                break
            scale[worse] *= 0.5
        p[idx] = pa + scale[:, None] * step
    if active.any():
        _, hp = spec.gradient(q[active], p[active])
        unresolved = np.max(np.abs(v[active] - hp), axis=-1) > NEWTON_TOL
        if unresolved.any():
            raise WkamError(ErrorCode.NO_CONVERGENCE, f"{spec.name}: Legendre Newton did not converge",
                            unresolved=int(unresolved.sum()))
    lag = np.sum(p * v, axis=-1) - spec.value(q, p)
    return lag, p


def legendre_lagrangian(spec: HamiltonianSpec, q, v) -> float:
    q = np.atleast_1d(np.asarray(q, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    lag, _ = lagrangian_batch(spec, wrap(q)[None, :], v[None, :])
    return float(lag[0])


def legendre_map(spec: HamiltonianSpec, x: PhasePoint) -> Tuple[np.ndarray, np.ndarray]:
    """(q, v) with v = dH/dp(q, p)."""
    _, hp = eval_gradient(spec, x)
    return x.q.copy(), hp


def vector_field(spec: HamiltonianSpec, q: np.ndarray, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """X_H = (dH/dp, -dH/dq)."""
    hq, hp = spec.gradient(q, p)
    return hp, -hq


@dataclass
class Trajectory:
    """A sampled orbit; q is lifted to R^d so windings stay readable."""

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray

    def __len__(self) -> int:
        return self.times.size

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def points(self) -> List[PhasePoint]:
        return [PhasePoint(self.q[i], self.p[i]) for i in range(len(self))]

    def final(self) -> PhasePoint:
        return PhasePoint(self.q[-1], self.p[-1])


def _verlet_step(spec: HamiltonianSpec, q, p, h):
    p_half = p - 0.5 * h * spec.series.gradient(q)
    q_new = q + h * p_half
    return q_new, p_half - 0.5 * h * spec.series.gradient(q_new)


def _rk4_step(spec: HamiltonianSpec, q, p, h):
    k1q, k1p = vector_field(spec, q, p)
    k2q, k2p = vector_field(spec, q + 0.5 * h * k1q, p + 0.5 * h * k1p)
    k3q, k3p = vector_field(spec, q + 0.5 * h * k2q, p + 0.5 * h * k2p)
    k4q, k4p = vector_field(spec, q + h * k3q, p + h * k3p)
    return (q + h / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q),
            p + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p))


def flow_integrate_batch(spec: HamiltonianSpec, q0: np.ndarray, p0: np.ndarray, T: float, dt: float,
                         p_max: float = 10.0, record_every: int = 1):
    """Integrate many initial points at once; negative T runs the flow backward.

    Returns (times (K,), q (K, N, d), p (K, N, d)). Stormer-Verlet for the mechanical
    family, classical fourth order Runge-Kutta otherwise.
    """
    if dt <= 0 or dt > 1e-2:
        raise ValueError(f"step must lie in (0, 1e-2], got {dt}")
    q = np.atleast_2d(np.asarray(q0, dtype=float)).copy()
    p = np.atleast_2d(np.asarray(p0, dtype=float)).copy()
    steps = int(np.ceil(abs(T) / dt - 1e-9)) if T != 0 else 0
    h = T / steps if steps else 0.0
    step = _verlet_step if spec.family == Family.MECHANICAL else _rk4_step
    times, qs, ps = [0.0], [q.copy()], [p.copy()]
    for i in range(1, steps + 1):
        q, p = step(spec, q, p, h)
        if np.max(np.linalg.norm(p, axis=-1)) > p_max:
            raise WkamError(ErrorCode.ESCAPE, f"momentum left the window |p| <= {p_max}", time=i * h)
        if i % record_every == 0 or i == steps:
            times.append(i * h)
            qs.append(q.copy())
            ps.append(p.copy())
    return np.array(times), np.stack(qs), np.stack(ps)


def flow_integrate(spec: HamiltonianSpec, x0: PhasePoint, T: float, dt: float = 1e-3,
                   p_max: float = 10.0, record_every: int = 1) -> Trajectory:
    times, q, p = flow_integrate_batch(spec, x0.q[None, :], x0.p[None, :], T, dt, p_max, record_every)
    return Trajectory(times, q[:, 0, :], p[:, 0, :])


def energy_drift(spec: HamiltonianSpec, trajectory: Trajectory) -> float:
    """max_t |H(x(t)) - H(x(0))|."""
    energy = spec.value(trajectory.q, trajectory.p)
    return float(np.max(np.abs(energy - energy[0])))
