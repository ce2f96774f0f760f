"""Level-2 rough paths sampled on uniform time grids.

A :class:`RoughPath` stores the path values ``X(t_k)`` and only the
per-step second-level tensors ``XX[k] = 𝕏_{t_k, t_{k+1}}``.  Second-level
values over arbitrary grid pairs are rebuilt by Chen composition, so Chen's
relation holds by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MODES = ("geometric-lift", "ito-brownian", "strato-brownian", "custom")

#: largest number of grid nodes used for Hölder sups before subsampling
MAX_PAIR_NODES = 4096


class GridError(ValueError):
    """Raised for inconsistent or non-uniform time grids."""


@dataclass(frozen=True)
class TimeGrid:
    start: float
    end: float
    n_steps: int

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise GridError("grid endpoints must be finite")
        if self.end <= self.start:
            raise GridError(f"grid end {self.end} must exceed start {self.start}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise GridError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def h(self) -> float:
        return (self.end - self.start) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        k = np.arange(self.n_steps + 1)
        return self.start + k * (self.end - self.start) / self.n_steps

    def time(self, k: int) -> float:
        return self.start + k * (self.end - self.start) / self.n_steps

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Grid index of node ``t``; raises if ``t`` is not a node."""
        x = (t - self.start) / self.h
        k = int(round(x))
        if abs(x - k) > tol or not 0 <= k <= self.n_steps:
            raise GridError(f"time {t} is not a node of {self}")
        return k

    def subgrid(self, i: int, k: int) -> "TimeGrid":
        if not 0 <= i < k <= self.n_steps:
            raise GridError(f"invalid subgrid indices ({i}, {k})")
        return TimeGrid(self.time(i), self.time(k), k - i)

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.start, self.end, self.n_steps * factor)


@dataclass(frozen=True, eq=False)
class RoughPath:
    """Grid-sampled rough path ``(X, 𝕏)``.

    ``values`` has shape ``(n + 1, d)`` and ``level2_step`` shape
    ``(n, d, d)`` with ``level2_step[k][i, j]`` approximating
    ``∫_{t_k}^{t_{k+1}} δX^i_{t_k, r} dX^j_r``.
    """

    grid: TimeGrid
    values: np.ndarray
    level2_step: np.ndarray
    mode: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        n = self.grid.n_steps
        if values.shape[0] != n + 1:
            raise GridError(f"expected {n + 1} path values, got {values.shape[0]}")
        d = values.shape[1]
        xx = np.array(self.level2_step, dtype=float).reshape(-1, d, d)
        if xx.shape[0] != n:
            raise GridError(f"expected {n} level-2 steps, got {xx.shape[0]}")
        if self.mode not in MODES:
            raise ValueError(f"unknown rough path mode {self.mode!r}")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(xx))):
            raise ValueError("rough path data must be finite")
        values.setflags(write=False)
        xx.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "level2_step", xx)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def level2_from_start(self) -> np.ndarray:
        """``𝕏_{t_0, t_k}`` for every k, shape ``(n + 1, d, d)``."""
        dx = self.increments
        offset = self.values[:-1] - self.values[0]
        steps = self.level2_step + offset[:, :, None] * dx[:, None, :]
        out = np.zeros((self.n_steps + 1, self.dim, self.dim))
        np.cumsum(steps, axis=0, out=out[1:])
        return out

    def restrict(self, i: int, k: int) -> "RoughPath":
        """The rough path on the sub-grid ``[t_i, t_k]``."""
        return RoughPath(self.grid.subgrid(i, k), self.values[i:k + 1],
                         self.level2_step[i:k], self.mode, dict(self.meta))

    def shifted(self, c) -> "RoughPath":
        return RoughPath(self.grid, self.values + np.asarray(c, float),
                         self.level2_step, self.mode, dict(self.meta))


def level2(rp: RoughPath, i: int, k: int) -> np.ndarray:
    """Second level ``𝕏_{t_i, t_k}`` by Chen-folding the stored steps."""
    n = rp.n_steps
    if not (0 <= i <= n and 0 <= k <= n):
        raise IndexError(f"grid indices ({i}, {k}) out of range 0..{n}")
    if i > k:
        raise IndexError(f"level2 needs i <= k, got ({i}, {k})")
    d = rp.dim
    acc = np.zeros((d, d))
    x_i = rp.values[i]
    for m in range(i, k):
        acc = acc + rp.level2_step[m] + np.outer(rp.values[m] - x_i,
                                                 rp.values[m + 1] - rp.values[m])
    return acc


def _check_uniform(times: np.ndarray, rtol: float = 1e-9) -> TimeGrid:
    if times.ndim != 1 or times.size < 2:
        raise GridError("need at least two sample times")
    dt = np.diff(times)
    if np.any(dt <= 0):
        raise GridError("sample times must be strictly increasing")
    h = (times[-1] - times[0]) / dt.size
    if np.max(np.abs(dt - h)) > rtol * max(abs(h), 1.0):
        raise GridError("sample times must be uniformly spaced")
    return TimeGrid(float(times[0]), float(times[-1]), dt.size)


def lift_piecewise_linear(times: Sequence[float], values,
                          grid: TimeGrid | None = None) -> RoughPath:
    """Canonical (geometric) lift of the linear interpolant of samples.

    ``grid``, when given, is used as the grid after checking it matches
    ``times``.
    """
    checked = _check_uniform(np.asarray(times, dtype=float))
    if grid is None:
        grid = checked
    elif grid.n_steps != checked.n_steps or not (
            math.isclose(grid.start, checked.start, abs_tol=1e-12)
            and math.isclose(grid.end, checked.end, rel_tol=1e-12)):
        raise GridError("sample times do not match the supplied grid")
    x = np.array(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    dx = np.diff(x, axis=0)
    xx = 0.5 * dx[:, :, None] * dx[:, None, :]
    return RoughPath(grid, x, xx, "geometric-lift")


def lift_function(fn, grid: TimeGrid) -> RoughPath:
    """Lift ``t -> fn(t)`` sampled on ``grid``."""
    t = grid.times
    vals = np.array([np.atleast_1d(fn(s)) for s in t], dtype=float)
    return lift_piecewise_linear(t, vals, grid)


def brownian_increments(seed, dim: int, n_fine: int, h_fine: float) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n_fine, dim)) * math.sqrt(h_fine)


def brownian_lift_steps(fine_dw: np.ndarray, n: int, h: float,
                        mode: str = "ito") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coarse path values, increments and per-step second levels.

    ``fine_dw`` has shape ``(..., n * R, d)``; the path starts at 0.  The symmetric part of each
    coarse tensor is exact (Itô formula); only the Lévy area comes from the
    left-point fine Riemann sum.
    """
    if mode not in ("ito", "strato"):
        raise ValueError(f"mode must be 'ito' or 'strato', got {mode!r}")
    fine_dw = np.asarray(fine_dw, dtype=float)
    lead = fine_dw.shape[:-2]
    if fine_dw.shape[-2] % n:
        raise GridError("fine increments must refine the coarse grid evenly")
    r = fine_dw.shape[-2] // n
    d = fine_dw.shape[-1]
    blocks = fine_dw.reshape(lead + (n, r, d))
    W = np.zeros(lead + (n + 1, d))
    np.cumsum(blocks.sum(axis=-2), axis=-2, out=W[..., 1:, :])
    # increments taken from the values so they match RoughPath.increments bitwise
    dw = np.diff(W, axis=-2)
    xx = 0.5 * dw[..., :, None] * dw[..., None, :]
    if d > 1 and r > 1:
        # left-point sum of δW_{t_k, r} ⊗ dW_r inside each coarse step
        before = np.cumsum(blocks, axis=-2) - blocks
        riemann = np.einsum("...ri,...rj->...ij", before, blocks)
        xx = xx + 0.5 * (riemann - np.swapaxes(riemann, -1, -2))
    if mode == "ito":
        xx = xx - 0.5 * h * np.eye(d)
    return W, dw, xx


def rough_path_from_fine(fine_dw: np.ndarray, grid: TimeGrid, mode: str = "ito",
                         meta: dict | None = None) -> RoughPath:
    """Brownian rough path on ``grid`` from fine increments ``(n * R, d)``."""
    values, _, xx = brownian_lift_steps(fine_dw, grid.n_steps, grid.h, mode)
    info = {"refinement": np.shape(fine_dw)[0] // grid.n_steps}
    if meta:
        info.update(meta)
    return RoughPath(grid, values, xx, f"{mode}-brownian", info)


def brownian_rough_path(seed, dim: int, grid: TimeGrid, refinement: int = 16,
                        mode: str = "ito") -> RoughPath:
    """Seeded Itô or Stratonovich Brownian rough path on ``grid``."""
    if int(refinement) != refinement or refinement < 1:
        raise ValueError(f"refinement must be a positive integer, got {refinement}")
    if dim < 1:
        raise ValueError("dim must be positive")
    if dim == 1:
        # scalar case needs only coarse increments
        refinement = 1
    fine = brownian_increments(seed, dim, grid.n_steps * refinement,
                               grid.h / refinement)
    return rough_path_from_fine(fine, grid, mode,
                                {"seed": seed if isinstance(seed, int) else list(seed)})


def geometricity_defect(rp: RoughPath) -> float:
    """``max_k |Sym(𝕏_k) - ½ δX_k ⊗ δX_k|``."""
    dx = rp.increments
    xx = rp.level2_step
    sym = 0.5 * (xx + xx.transpose(0, 2, 1))
    return float(np.max(np.abs(sym - 0.5 * dx[:, :, None] * dx[:, None, :]), initial=0.0))


def pair_stride(n: int, cap: int = MAX_PAIR_NODES) -> int:
    return max(1, -(-n // cap))


def _pair_nodes(n: int, cap: int) -> np.ndarray:
    stride = pair_stride(n, cap)
    idx = np.arange(0, n + 1, stride)
    if idx[-1] != n:
        idx = np.append(idx, n)
    return idx


def _holder_sups(values: np.ndarray, l2_start: np.ndarray, times: np.ndarray,
                 beta1: float, beta2: float, idx: np.ndarray) -> tuple[float, float]:
    """Sups over grid pairs of ``|δX|/Δt^beta1`` and ``|𝕏|/Δt^beta2``."""
    x = values[idx]
    l2 = l2_start[idx]
    t = times[idx]
    s1 = s2 = 0.0
    for a in range(len(idx) - 1):
        dt = t[a + 1:] - t[a]
        dx = x[a + 1:] - x[a]
        # Chen: 𝕏_{s,t} = 𝕏_{0,t} - 𝕏_{0,s} - δX_{0,s} ⊗ δX_{s,t}
        xx = l2[a + 1:] - l2[a] - (x[a] - x[0])[None, :, None] * dx[:, None, :]
        n1 = np.sqrt(np.sum(dx * dx, axis=1))
        n2 = np.sqrt(np.sum(xx * xx, axis=(1, 2)))
        s1 = max(s1, float(np.max(n1 / dt ** beta1)))
        s2 = max(s2, float(np.max(n2 / dt ** beta2)))
    return s1, s2


def homogeneous_norm(rp: RoughPath, alpha: float, cap: int = MAX_PAIR_NODES) -> float:
    """Discrete homogeneous norm ``|δX|_α ∨ sqrt(|𝕏|_{2α})``.

    Above ``cap`` grid nodes the pairs are subsampled every
    ``pair_stride(n)``-th node.
    """
    idx = _pair_nodes(rp.n_steps, cap)
    s1, s2 = _holder_sups(rp.values, rp.level2_from_start(), rp.grid.times,
                          alpha, 2 * alpha, idx)
    return max(s1, math.sqrt(s2))


def rho_alpha(rp1: RoughPath, rp2: RoughPath, alpha: float,
              cap: int = MAX_PAIR_NODES) -> float:
    """Inhomogeneous distance ``|δX - δY|_α + |𝕏 - 𝕐|_{2α}``."""
    if rp1.grid != rp2.grid:
        raise GridError("rough paths live on different grids")
    if rp1.dim != rp2.dim:
        raise GridError("rough paths have different dimensions")
    idx = _pair_nodes(rp1.n_steps, cap)
    x1, x2 = rp1.values[idx], rp2.values[idx]
    l1, l2 = rp1.level2_from_start()[idx], rp2.level2_from_start()[idx]
    t = rp1.grid.times[idx]
    s1 = s2 = 0.0
    for a in range(len(idx) - 1):
        dt = t[a + 1:] - t[a]
        d1 = x1[a + 1:] - x1[a]
        d2 = x2[a + 1:] - x2[a]
        xx1 = l1[a + 1:] - l1[a] - (x1[a] - x1[0])[None, :, None] * d1[:, None, :]
        xx2 = l2[a + 1:] - l2[a] - (x2[a] - x2[0])[None, :, None] * d2[:, None, :]
        e1 = np.sqrt(np.sum((d1 - d2) ** 2, axis=1))
        e2 = np.sqrt(np.sum((xx1 - xx2) ** 2, axis=(1, 2)))
        s1 = max(s1, float(np.max(e1 / dt ** alpha)))
        s2 = max(s2, float(np.max(e2 / dt ** (2 * alpha))))
    return s1 + s2
