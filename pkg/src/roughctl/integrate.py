"""Compensated Riemann sums against a rough path."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .roughpath import GridError, RoughPath, TimeGrid, _pair_nodes, MAX_PAIR_NODES


@dataclass(frozen=True, eq=False)
class ControlledPath:
    """Integrand ``Z`` (shape ``(n+1, m)``) with Gubinelli derivative
    ``Zprime`` (shape ``(n+1, m, d)``)."""

    grid: TimeGrid
    Z: np.ndarray
    Zprime: np.ndarray

    def __post_init__(self):
        z = np.array(self.Z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        zp = np.array(self.Zprime, dtype=float)
        if zp.ndim == 1:
            zp = zp[:, None, None]
        elif zp.ndim == 2:
            zp = zp[:, None, :] if z.shape[1] == 1 else zp[:, :, None]
        n1 = self.grid.n_steps + 1
        if z.shape[0] != n1 or zp.shape[0] != n1:
            raise GridError("controlled path length must match the grid")
        if zp.shape[1] != z.shape[1]:
            raise GridError("Z and Zprime disagree on the value dimension")
        object.__setattr__(self, "Z", z)
        object.__setattr__(self, "Zprime", zp)

    @property
    def m(self) -> int:
        return self.Z.shape[1]

    def remainder(self, rp: RoughPath, i: int, k: int) -> np.ndarray:
        """``R^Z_{t_i, t_k} = δZ - Z'_{t_i} δX``."""
        dz = self.Z[k] - self.Z[i]
        return dz - self.Zprime[i] @ (rp.values[k] - rp.values[i])

    def restrict(self, i: int, k: int) -> "ControlledPath":
        return ControlledPath(self.grid.subgrid(i, k), self.Z[i:k + 1],
                              self.Zprime[i:k + 1])

    def __add__(self, other: "ControlledPath") -> "ControlledPath":
        return ControlledPath(self.grid, self.Z + other.Z, self.Zprime + other.Zprime)

    def scaled(self, a: float) -> "ControlledPath":
        return ControlledPath(self.grid, a * self.Z, a * self.Zprime)


def _check(cp: ControlledPath, rp: RoughPath):
    if cp.grid != rp.grid:
        raise GridError("controlled path and rough path use different grids")
    if cp.Zprime.shape[2] != rp.dim:
        raise GridError(f"Zprime has {cp.Zprime.shape[2]} columns, rough path "
                        f"dimension is {rp.dim}")


def rough_integral(cp: ControlledPath, rp: RoughPath) -> np.ndarray:
    """Running integral ``∫ Z ⊗ d𝐗`` at every node, shape ``(n+1, m, d)``.

    Each step adds ``Z_k ⊗ δX_k + Z'_k 𝕏_k``.
    """
    _check(cp, rp)
    dx = rp.increments
    steps = cp.Z[:-1, :, None] * dx[:, None, :] + np.matmul(cp.Zprime[:-1], rp.level2_step)
    out = np.zeros((rp.n_steps + 1, cp.m, rp.dim))
    # sequential accumulation keeps the result additive over sub-intervals
    for k in range(rp.n_steps):
        out[k + 1] = out[k] + steps[k]
    return out


@dataclass(frozen=True)
class SeminormReport:
    dz: float
    sup_zprime: float
    dzprime: float
    remainder: float
    empirical: bool = True


def controlled_seminorms(cp: ControlledPath, rp: RoughPath, kappa: float,
                         kappa_prime: float, cap: int = MAX_PAIR_NODES) -> SeminormReport:
    """Pathwise discrete sups over grid pairs (single-realization diagnostic)."""
    _check(cp, rp)
    for e in (kappa, kappa_prime):
        if not 0 <= e <= 1:
            raise ValueError("exponents must lie in [0, 1]")
    idx = _pair_nodes(rp.n_steps, cap)
    t = rp.grid.times[idx]
    z, zp, x = cp.Z[idx], cp.Zprime[idx], rp.values[idx]
    s_dz = s_dzp = s_r = 0.0
    for a in range(len(idx) - 1):
        dt = t[a + 1:] - t[a]
        dz = z[a + 1:] - z[a]
        dzp = zp[a + 1:] - zp[a]
        r = dz - (zp[a] @ (x[a + 1:] - x[a]).T).T
        s_dz = max(s_dz, float(np.max(np.linalg.norm(dz, axis=1) / dt ** kappa)))
        s_dzp = max(s_dzp, float(np.max(np.linalg.norm(dzp, axis=(1, 2)) / dt ** kappa_prime)))
        s_r = max(s_r, float(np.max(np.linalg.norm(r, axis=1) / dt ** (kappa + kappa_prime))))
    sup_zp = float(np.max(np.linalg.norm(cp.Zprime, axis=(1, 2))))
    return SeminormReport(s_dz, sup_zp, s_dzp, s_r)
