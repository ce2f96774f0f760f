"""Davie-type time stepping for controlled rough SDEs

    dY = b(t, Y, a) dt + σ(t, Y, a) dB + (f, f')(t, Y) d𝐗.

All coefficient evaluators are vectorised: they receive ``y`` with shape
``(..., d_Y)`` and control points with shape ``(..., d_A)`` (broadcastable)
and return arrays with matching leading dimensions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .roughpath import GridError, RoughPath, TimeGrid


class NumericalError(ArithmeticError):
    """Non-finite values produced during time stepping."""


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficients of a controlled RSDE.

    ``f`` returns ``(..., d_Y, d_X)``, ``Df[..., a, j, k] = ∂_{y_k} f^a_j`` and
    ``fprime`` returns ``(..., d_Y, d_X, d_X)``.  ``f=None`` means no rough
    driver; ``sigma=None`` means no Brownian term.
    """

    d_y: int
    d_x: int
    d_b: int
    d_a: int
    b: Callable
    sigma: Optional[Callable] = None
    f: Optional[Callable] = None
    Df: Optional[Callable] = None
    fprime: Optional[Callable] = None
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.f is not None and self.Df is None:
            raise ValueError("Df is required when f is given")
        for key, val in self.bounds.items():
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"declared bound {key}={val} must be positive and finite")

    @property
    def has_noise(self) -> bool:
        return self.sigma is not None and self.d_b > 0

    @property
    def has_rough(self) -> bool:
        return self.f is not None


def second_level_coeff(coeffs: CoefficientSet, t: float, y: np.ndarray) -> np.ndarray:
    """``Γ[..., a, i, j] = Σ_k ∂_{y_k} f^a_j f^k_i + f'^a_{ij}``.

    With this ordering the scalar case ``f(y) = y`` gives
    ``Γ 𝕏 = y 𝕏``, i.e. ``y (1 + x + x²/2)`` for a geometric step.
    """
    fv = coeffs.f(t, y)
    dfv = coeffs.Df(t, y)
    gam = np.einsum("...ajk,...ki->...aij", dfv, fv)
    if coeffs.fprime is not None:
        gam = gam + coeffs.fprime(t, y)
    return gam


def davie_step(y, coeffs: CoefficientSet, t: float, a, h: float, dB, dX, XX):
    """One Davie step ``y + b h + σ dB + f δX + Γ 𝕏``."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    y = np.asarray(y, dtype=float)
    # overflow is reported below as NumericalError
    with np.errstate(over="ignore", invalid="ignore"):
        out = y + coeffs.b(t, y, a) * h
        if coeffs.has_noise:
            out = out + np.einsum("...ab,...b->...a", coeffs.sigma(t, y, a), dB)
        if coeffs.has_rough:
            out = out + np.einsum("...ai,...i->...a", coeffs.f(t, y), dX)
            out = out + np.einsum("...aij,...ij->...a", second_level_coeff(coeffs, t, y), XX)
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"non-finite state after step at t={t}, "
                             f"y={np.asarray(y).reshape(-1)[:6]}, a={np.asarray(a).reshape(-1)[:4]}")
    return out


def euler_maruyama_step(y, coeffs: CoefficientSet, t: float, a, h: float, dB, dW):
    """Classical Itô Euler step of ``dY = b dt + σ dB + f dW``."""
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = y + coeffs.b(t, y, a) * h
        if coeffs.has_noise:
            out = out + np.einsum("...ab,...b->...a", coeffs.sigma(t, y, a), dB)
        if coeffs.has_rough:
            out = out + np.einsum("...ai,...i->...a", coeffs.f(t, y), dW)
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"non-finite state after Euler step at t={t}")
    return out


@dataclass(frozen=True, eq=False)
class NoiseBundle:
    """Pre-generated Brownian increments, shape ``(n_paths, n_steps, d_B)``.

    Path ``p`` draws from its own stream keyed by ``(seed, stream, p)``.
    """

    seed: int
    grid: TimeGrid
    dB: np.ndarray
    stream: int = 0

    def __post_init__(self):
        db = np.asarray(self.dB, dtype=float)
        if db.ndim != 3 or db.shape[1] != self.grid.n_steps:
            raise GridError(f"noise shape {db.shape} does not match the grid")
        object.__setattr__(self, "dB", db)

    @classmethod
    def sample(cls, seed: int, n_paths: int, grid: TimeGrid, d_b: int,
               stream: int = 0) -> "NoiseBundle":
        if n_paths < 1:
            raise ValueError("n_paths must be positive")
        sd = np.sqrt(grid.h)
        db = np.empty((n_paths, grid.n_steps, d_b))
        for p in range(n_paths):
            rng = np.random.default_rng([seed, stream, p])
            db[p] = rng.standard_normal((grid.n_steps, d_b)) * sd
        return cls(seed, grid, db, stream)

    @property
    def n_paths(self) -> int:
        return self.dB.shape[0]

    def coarsen(self, factor: int) -> "NoiseBundle":
        n = self.grid.n_steps
        if n % factor:
            raise GridError(f"cannot coarsen {n} steps by {factor}")
        db = self.dB.reshape(self.n_paths, n // factor, factor, -1).sum(axis=2)
        return NoiseBundle(self.seed, TimeGrid(self.grid.start, self.grid.end, n // factor),
                           db, self.stream)

    def select(self, paths: Sequence[int]) -> "NoiseBundle":
        return NoiseBundle(self.seed, self.grid, self.dB[list(paths)], self.stream)


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    grid: TimeGrid
    states: np.ndarray     # (n_paths, n + 1, d_Y)
    controls: np.ndarray   # (n_paths, n, d_A)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[:, -1]


def _control_source(control, n_paths: int, start_index: int, n_steps: int, d_a: int):
    """Return ``fn(k, t, y) -> (n_paths, d_A)`` for global step ``k``."""
    if callable(control):
        def fn(k, t, y):
            a = np.asarray(control(k, t, y), dtype=float)
            return np.broadcast_to(a, (n_paths, d_a))
        return fn
    arr = np.asarray(control, dtype=float)
    if arr.ndim == 0:
        arr = np.full(d_a, float(arr))
    if arr.ndim == 1:
        arr = np.broadcast_to(arr, (n_paths, n_steps, d_a))
    elif arr.ndim == 2:
        arr = np.broadcast_to(arr[None], (n_paths, n_steps, d_a))
    if arr.shape != (n_paths, n_steps, d_a):
        raise ValueError(f"control signal shape {arr.shape} does not match "
                         f"({n_paths}, {n_steps}, {d_a})")
    return lambda k, t, y: arr[:, k - start_index]


def integrate_paths(coeffs: CoefficientSet, control, grid: TimeGrid, start_index: int,
                    dX: np.ndarray, XX: np.ndarray, dB: np.ndarray, y0,
                    scheme: str = "davie") -> TrajectoryBatch:
    """Step every path from ``start_index`` to the end of ``grid``.

    ``dX``/``XX`` are either shared (``(n, d)``, ``(n, d, d)``) or per path
    (``(P, n, d)``, ``(P, n, d, d)``); ``dB`` is ``(P, n, d_B)``; all are
    indexed by global step.
    """
    n_paths = dB.shape[0]
    n = grid.n_steps
    m = n - start_index
    if m < 1:
        raise GridError("start must precede the final grid node")
    y = np.broadcast_to(np.asarray(y0, dtype=float), (n_paths, coeffs.d_y)).copy()
    states = np.empty((n_paths, m + 1, coeffs.d_y))
    ctrls = np.empty((n_paths, m, coeffs.d_a))
    states[:, 0] = y
    src = _control_source(control, n_paths, start_index, m, coeffs.d_a)
    h = grid.h
    per_path = dX.ndim == 3
    for j in range(m):
        k = start_index + j
        t = grid.time(k)
        a = src(k, t, y)
        dx = dX[:, k] if per_path else dX[k]
        xx = XX[:, k] if per_path else XX[k]
        try:
            if scheme == "davie":
                y = davie_step(y, coeffs, t, a, h, dB[:, k], dx, xx)
            else:
                y = euler_maruyama_step(y, coeffs, t, a, h, dB[:, k], dx)
        except NumericalError as exc:
            raise NumericalError(f"step {k}: {exc}") from exc
        states[:, j + 1] = y
        ctrls[:, j] = a
    return TrajectoryBatch(grid.subgrid(start_index, n), states, ctrls)


def solve_rsde(coeffs: CoefficientSet, control, rp: RoughPath, noise: NoiseBundle,
               y0, start: float | None = None) -> TrajectoryBatch:
    """Davie-scheme solution of the controlled RSDE on ``rp``'s grid.

    ``control`` is a constant control point, a per-step signal of shape
    ``(n - j, d_A)`` or ``(n_paths, n - j, d_A)``, or a feedback policy
    ``policy(k, t, y) -> (n_paths, d_A)`` with ``k`` the global grid index.
    """
    if noise.grid != rp.grid:
        raise GridError("noise and rough path use different grids")
    if coeffs.has_rough and rp.dim != coeffs.d_x:
        raise GridError(f"rough path dimension {rp.dim} != d_X={coeffs.d_x}")
    if coeffs.has_noise and noise.dB.shape[2] != coeffs.d_b:
        raise GridError("noise dimension does not match d_B")
    j = 0 if start is None else rp.grid.index_of(start)
    return integrate_paths(coeffs, control, rp.grid, j, rp.increments, rp.level2_step,
                           noise.dB, y0)


def flow_steps(F: Sequence[np.ndarray], rp: RoughPath) -> np.ndarray:
    """One-step matrices ``I + Σ_i F_i δX^i + Σ_ij F_j F_i 𝕏^{ij}``."""
    F = np.asarray(F, dtype=float)
    if F.ndim == 2:
        F = F[None]
    d_x, d_y, d_y2 = F.shape
    if d_y != d_y2 or d_x != rp.dim:
        raise GridError(f"flow matrices {F.shape} incompatible with path dimension {rp.dim}")
    FF = np.einsum("jab,ibc->ijac", F, F)   # FF[i, j] = F_j F_i
    A = (np.eye(d_y)[None]
         + np.einsum("iab,ki->kab", F, rp.increments)
         + np.einsum("ijab,kij->kab", FF, rp.level2_step))
    return A


def flow_between(F, rp: RoughPath, i: int, k: int) -> np.ndarray:
    """``P_{t_k <- t_i}`` from the composed one-step matrices."""
    A = flow_steps(F, rp)
    P = np.eye(A.shape[1])
    for m in range(i, k):
        P = A[m] @ P
    return P


@dataclass(frozen=True, eq=False)
class LinearFlow:
    to_end: np.ndarray   # P_{T <- t_k}, shape (n + 1, d_Y, d_Y)
    theta: np.ndarray    # (P_{T <- t_k})^T v
    theta_norm: np.ndarray


def linear_flow(F, rp: RoughPath, v) -> LinearFlow:
    """Backward-composed flows to the terminal time and ``Θ = P^T v``."""
    A = flow_steps(F, rp)
    n, d_y = A.shape[0], A.shape[1]
    v = np.asarray(v, dtype=float).reshape(d_y)
    P = np.empty((n + 1, d_y, d_y))
    P[n] = np.eye(d_y)
    for k in range(n - 1, -1, -1):
        P[k] = P[k + 1] @ A[k]
    theta = np.einsum("kba,b->ka", P, v)
    return LinearFlow(P, theta, np.linalg.norm(theta, axis=1))
