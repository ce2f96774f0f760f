"""Randomised rough value functions and the pathwise-consistency check.

Plugging a sampled Brownian rough path 𝕎(ω'') into the rough value
function gives ``V̄(s, y; ω'') = V(s, y; 𝕎(ω''))``.  Outer sample ``i`` draws
its rough path from a stream keyed by ``(seed, i)``, so samples are
exchangeable and independent of evaluation order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .control import ControlProblem, StateLattice, dpp_solve
from .examples import LinearTargetSpec, linear_target_value
from .roughpath import RoughPath, TimeGrid, brownian_increments, brownian_lift_steps, brownian_rough_path
from .rsde import CoefficientSet, NoiseBundle, NumericalError, integrate_paths


@dataclass(frozen=True)
class RandomizationSpec:
    seed: int
    n_outer: int
    grid: TimeGrid
    dim: int = 1
    refinement: int = 16
    mode: str = "ito"

    def __post_init__(self):
        if self.n_outer < 1:
            raise ValueError("n_outer must be at least 1")
        if self.mode not in ("ito", "strato"):
            raise ValueError(f"mode must be 'ito' or 'strato', got {self.mode!r}")

    def rough_path(self, index: int) -> RoughPath:
        return brownian_rough_path([self.seed, index], self.dim, self.grid,
                                   self.refinement, self.mode)


@dataclass(frozen=True, eq=False)
class RandomizedValues:
    samples: np.ndarray
    mean: float
    stderr: float
    min: float
    max: float


def closed_form_inner(spec: LinearTargetSpec) -> Callable[[RoughPath], float]:
    return lambda rp: linear_target_value(spec, rp).value


def dpp_inner(problem: ControlProblem, lattice: StateLattice, y0,
              quad_nodes: int = 5) -> Callable[[RoughPath], float]:
    y0 = np.asarray(y0, dtype=float)
    return lambda rp: float(dpp_solve(problem, rp, lattice, quad_nodes).value(0, y0))


def sample_randomized_values(spec: RandomizationSpec, inner: Callable[[RoughPath], float],
                             indices: Sequence[int] | None = None) -> RandomizedValues:
    """Evaluate ``inner`` on independently sampled Brownian rough paths."""
    idx = range(spec.n_outer) if indices is None else indices
    out = []
    for i in idx:
        try:
            out.append(float(inner(spec.rough_path(i))))
        except NumericalError as exc:
            raise NumericalError(f"outer sample {i}: {exc}") from exc
    vals = np.asarray(out)
    se = float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
    return RandomizedValues(vals, float(vals.mean()), se, float(vals.min()), float(vals.max()))


@dataclass(frozen=True, eq=False)
class MeshGap:
    n: int
    mean_gap: float
    paths: int
    rough_terminal: np.ndarray
    em_terminal: np.ndarray
    W_T: np.ndarray


def pathwise_consistency(coeffs: CoefficientSet, control, seed: int, meshes: Sequence[int],
                         n_paths: int, y0, T: float = 1.0, start: float = 0.0,
                         refinement: int = 1) -> list[MeshGap]:
    """Coupled comparison of the Davie scheme driven by 𝕎^Itô against
    Euler–Maruyama for ``dY = b dt + σ dB + f dW``.

    All meshes share the same fine ``W`` (per path, keyed ``(seed, 2, p)``)
    and the same fine ``B`` (stream 1), so only the discretisation differs.
    """
    meshes = sorted(int(m) for m in meshes)
    finest = meshes[-1]
    if any(finest % m for m in meshes):
        raise ValueError("meshes must divide the finest mesh")
    fine_steps = finest * refinement
    h_fine = (T - start) / fine_steps
    d_x = coeffs.d_x
    W = np.stack([brownian_increments([seed, 2, p], d_x, fine_steps, h_fine)
                  for p in range(n_paths)])
    fine_grid = TimeGrid(start, T, finest)
    noise = NoiseBundle.sample(seed, n_paths, fine_grid, coeffs.d_b, stream=1)
    out = []
    for n in meshes:
        grid = TimeGrid(start, T, n)
        Wv, dW, XX = brownian_lift_steps(W, n, grid.h, "ito")
        dB = noise.coarsen(finest // n).dB
        rough = integrate_paths(coeffs, control, grid, 0, dW, XX, dB, y0, "davie")
        em = integrate_paths(coeffs, control, grid, 0, dW, XX, dB, y0, "euler")
        gap = np.linalg.norm(rough.terminal - em.terminal, axis=-1)
        out.append(MeshGap(n, float(gap.mean()), n_paths, rough.terminal, em.terminal,
                           Wv[:, -1]))
    return out
