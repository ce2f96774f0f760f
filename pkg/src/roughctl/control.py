"""Rough value functions by backward dynamic programming on a state lattice.

For a fixed rough path the one-step recursion is

    V(t_k, y) = opt_a { ℓ(t_k, y, a) h + E[ V(t_{k+1}, Φ_k(y, a, ΔB)) ] }

with ``Φ_k`` one Davie step.  The expectation over ``ΔB`` uses tensorised
Gauss–Hermite nodes and off-lattice values come from clamped multilinear
interpolation.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .roughpath import GridError, RoughPath, TimeGrid, rho_alpha
from .rsde import CoefficientSet, NoiseBundle, NumericalError, davie_step, solve_rsde

log = logging.getLogger(__name__)

MAX_STATE_DIM = 3
MAX_CONTROL_DIM = 2


def control_box(lower, upper, counts) -> np.ndarray:
    """Uniform discretisation of a box in R^{d_A}, shape ``(C, d_A)``."""
    lower, upper, counts = np.atleast_1d(lower), np.atleast_1d(upper), np.atleast_1d(counts)
    axes = [np.linspace(lo, hi, int(c)) for lo, hi, c in zip(lower, upper, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class ControlProblem:
    """Data of a controlled RSDE cost-minimisation (or maximisation) problem.

    ``g(y)`` and ``ell(t, y, a)`` are vectorised over leading dimensions;
    ``ell=None`` means no running cost.
    """

    coeffs: CoefficientSet
    g: Callable
    controls: np.ndarray
    horizon: TimeGrid
    ell: Optional[Callable] = None
    sense: str = "min"

    def __post_init__(self):
        c = np.asarray(self.controls, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.shape[0] == 0:
            raise ValueError("control set must be nonempty")
        if c.shape[1] != self.coeffs.d_a:
            raise ValueError(f"control points have dimension {c.shape[1]}, expected {self.coeffs.d_a}")
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")
        object.__setattr__(self, "controls", c)

    def running(self, t, y, a):
        if self.ell is None:
            return np.zeros(np.broadcast_shapes(np.shape(y)[:-1], np.shape(a)[:-1]))
        return self.ell(t, y, a)

    def restrict(self, i: int, k: int) -> "ControlProblem":
        return replace(self, horizon=self.horizon.subgrid(i, k))


@dataclass(frozen=True)
class StateLattice:
    """Tensor lattice given as per-axis ``(lower, upper, nodes)``."""

    axes_spec: tuple

    def __post_init__(self):
        spec = tuple((float(lo), float(hi), int(n)) for lo, hi, n in self.axes_spec)
        for lo, hi, n in spec:
            if not lo < hi:
                raise ValueError(f"lattice bounds need lower < upper, got ({lo}, {hi})")
            if n < 2:
                raise ValueError("each lattice axis needs at least two nodes")
        object.__setattr__(self, "axes_spec", spec)

    @property
    def dim(self) -> int:
        return len(self.axes_spec)

    @property
    def shape(self) -> tuple:
        return tuple(n for _, _, n in self.axes_spec)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def axes(self) -> list:
        return [np.linspace(lo, hi, n) for lo, hi, n in self.axes_spec]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def interpolate(self, values: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, int]:
        """Clamped multilinear interpolation of flat nodal ``values``.

        Returns the interpolated values (shape ``y.shape[:-1]``) and the
        number of query points that fell outside the box.
        """
        y = np.asarray(y, dtype=float)
        lead = y.shape[:-1]
        pts = y.reshape(-1, self.dim)
        outside = np.zeros(pts.shape[0], dtype=bool)
        base = np.zeros(pts.shape[0], dtype=np.intp)
        weights = []
        strides = np.cumprod((self.shape[1:] + (1,))[::-1])[::-1]
        for ax, (lo, hi, n) in enumerate(self.axes_spec):
            x = pts[:, ax]
            outside |= (x < lo) | (x > hi)
            step = (hi - lo) / (n - 1)
            pos = (np.clip(x, lo, hi) - lo) / step
            i0 = np.clip(np.floor(pos).astype(np.intp), 0, n - 2)
            w = np.clip(pos - i0, 0.0, 1.0)
            base += i0 * strides[ax]
            weights.append(w)
        out = np.zeros(pts.shape[0])
        flat = values.reshape(-1)
        for corner in itertools.product((0, 1), repeat=self.dim):
            wt = np.ones(pts.shape[0])
            offset = 0
            for ax, c in enumerate(corner):
                wt = wt * (weights[ax] if c else 1.0 - weights[ax])
                offset += c * strides[ax]
            out += wt * flat[base + offset]
        return out.reshape(lead), int(outside.sum())

    def nearest(self, y: np.ndarray) -> np.ndarray:
        """Flat index of the nearest lattice node for each point."""
        y = np.asarray(y, dtype=float)
        pts = y.reshape(-1, self.dim)
        strides = np.cumprod((self.shape[1:] + (1,))[::-1])[::-1]
        idx = np.zeros(pts.shape[0], dtype=np.intp)
        for ax, (lo, hi, n) in enumerate(self.axes_spec):
            step = (hi - lo) / (n - 1)
            i = np.clip(np.rint((pts[:, ax] - lo) / step).astype(np.intp), 0, n - 1)
            idx += i * strides[ax]
        return idx.reshape(y.shape[:-1])


@dataclass(eq=False)
class ValueGrid:
    """Value function and argopt policy on ``grid`` × ``lattice``.

    ``values`` has shape ``(n + 1, N)`` and ``policy`` shape ``(n, N)``
    (flat lattice ordering, C order).
    """

    grid: TimeGrid
    lattice: StateLattice
    values: np.ndarray
    policy: np.ndarray
    controls: np.ndarray
    sense: str
    boundary_hits: int = 0
    meta: dict = field(default_factory=dict)

    def value(self, k: int, y) -> float | np.ndarray:
        v, _ = self.lattice.interpolate(self.values[k], np.asarray(y, float))
        return v

    def terminal_cost(self, k: int = 0) -> Callable:
        vals = self.values[k].copy()
        return lambda y: self.lattice.interpolate(vals, y)[0]

    def control_at(self, k: int, y) -> np.ndarray:
        return self.controls[self.policy[k][self.lattice.nearest(y)]]

    def feedback(self, start_index: int = 0) -> Callable:
        """Feedback ``(k, t, y) -> control`` where ``k`` indexes the rough
        path grid and ``start_index`` aligns it with this value grid."""
        return lambda k, t, y: self.control_at(k - start_index, y)

    def shaped(self, k: int) -> np.ndarray:
        return self.values[k].reshape(self.lattice.shape)


def gauss_hermite(n_nodes: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensorised probabilists' Gauss–Hermite rule for N(0, I_dim)."""
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    x, w = hermegauss(n_nodes)
    w = w / np.sqrt(2.0 * np.pi)
    nodes = np.array(list(itertools.product(x, repeat=dim)))
    weights = np.array([np.prod(c) for c in itertools.product(w, repeat=dim)])
    return nodes, weights


def _check_sizes(problem: ControlProblem, lattice: StateLattice):
    d_y, d_a = problem.coeffs.d_y, problem.coeffs.d_a
    if d_y != lattice.dim:
        raise GridError(f"lattice dimension {lattice.dim} != state dimension {d_y}")
    if d_y > MAX_STATE_DIM or d_a > MAX_CONTROL_DIM:
        raise ValueError(f"full-lattice DP supports d_Y <= {MAX_STATE_DIM} and "
                         f"d_A <= {MAX_CONTROL_DIM}; got d_Y={d_y}, d_A={d_a}")


def dpp_solve(problem: ControlProblem, rp: RoughPath, lattice: StateLattice,
              quad_nodes: int = 5) -> ValueGrid:
    """Backward DP sweep over ``rp``'s grid.

    The max sense is solved as the min problem of the negated costs; ties
    go to the lowest control index.
    """
    if problem.horizon != rp.grid:
        raise GridError("problem horizon and rough path grid differ")
    if quad_nodes < 1:
        raise ValueError("quad_nodes must be at least 1")
    _check_sizes(problem, lattice)
    co = problem.coeffs
    sign = 1.0 if problem.sense == "min" else -1.0
    if not co.has_noise:
        quad_nodes = 1
    xi, wq = gauss_hermite(quad_nodes, co.d_b if co.has_noise else 0)

    grid = rp.grid
    n, h = grid.n_steps, grid.h
    Y = lattice.points()
    A = problem.controls
    N, C = Y.shape[0], A.shape[0]
    y4 = Y[:, None, None, :]
    a4 = A[None, :, None, :]
    db4 = (np.sqrt(h) * xi)[None, None, :, :]
    dX, XX = rp.increments, rp.level2_step

    values = np.empty((n + 1, N))
    policy = np.empty((n, N), dtype=np.intp)
    term = sign * np.asarray(problem.g(Y), dtype=float).reshape(N)
    if not np.all(np.isfinite(term)):
        raise NumericalError("terminal cost is not finite on the lattice")
    values[n] = term
    hits = 0
    rows = np.arange(N)
    for k in range(n - 1, -1, -1):
        t = grid.time(k)
        nxt = davie_step(y4, co, t, a4, h, db4, dX[k], XX[k])
        nxt = np.broadcast_to(nxt, (N, C, xi.shape[0], co.d_y))
        cont, out = lattice.interpolate(values[k + 1], nxt)
        hits += out
        expect = cont @ wq
        run = sign * np.broadcast_to(problem.running(t, Y[:, None, :], A[None, :, :]), (N, C))
        cand = run * h + expect
        if not np.all(np.isfinite(cand)):
            raise NumericalError(f"non-finite continuation value at step {k}")
        best = np.argmin(cand, axis=1)
        policy[k] = best
        values[k] = cand[rows, best]
    if sign < 0:
        values = -values
    meta = {"quad_nodes": quad_nodes, "n_steps": n, "lattice": lattice.axes_spec,
            "n_controls": C}
    meta.update(_bounds_report(problem, values, Y))
    if hits:
        log.debug("dpp_solve: %d clamped lattice evaluations", hits)
    return ValueGrid(grid, lattice, values, policy, A, problem.sense, hits, meta)


def _bounds_report(problem: ControlProblem, values: np.ndarray, Y: np.ndarray) -> dict:
    gv = np.asarray(problem.g(Y), dtype=float)
    grid = problem.horizon
    if problem.ell is None:
        ell_sup = 0.0
    else:
        ell_sup = 0.0
        for k in range(grid.n_steps):
            lv = problem.ell(grid.time(k), Y[:, None, :], problem.controls[None, :, :])
            ell_sup = max(ell_sup, float(np.max(np.abs(lv))))
    span = ell_sup * (grid.end - grid.start)
    lo, hi = float(gv.min()) - span, float(gv.max()) + span
    slack = 1e-9 * max(1.0, abs(lo), abs(hi))
    return {"value_bounds": (lo, hi),
            "bounds_ok": bool(values.min() >= lo - slack and values.max() <= hi + slack)}


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    stderr: float
    n_paths: int


def policy_value_mc(problem: ControlProblem, policy, rp: RoughPath, y0, start: float,
                    n_paths: int, seed: int) -> MCEstimate:
    """Monte Carlo cost of a policy: ``g(Y_T) + Σ ℓ(t_k, Y_k, a_k) h``.

    ``policy`` is a :class:`ValueGrid` (nearest-node feedback), a feedback
    callable ``(k, t, y)``, or an explicit control signal.
    """
    if problem.horizon != rp.grid:
        raise GridError("problem horizon and rough path grid differ")
    co = problem.coeffs
    grid = rp.grid
    j = grid.index_of(start)
    noise = NoiseBundle.sample(seed, n_paths, grid, co.d_b if co.has_noise else 0)
    if isinstance(policy, ValueGrid):
        offset = grid.n_steps - policy.grid.n_steps
        control = policy.feedback(offset)
    else:
        control = policy
    traj = solve_rsde(co, control, rp, noise, y0, start)
    cost = np.asarray(problem.g(traj.terminal), dtype=float).reshape(n_paths)
    if problem.ell is not None:
        h = grid.h
        run = np.zeros(n_paths)
        for i in range(traj.controls.shape[1]):
            t = grid.time(j + i)
            run = run + problem.ell(t, traj.states[:, i], traj.controls[:, i]) * h
        cost = cost + run
    if np.ptp(cost) == 0.0:
        return MCEstimate(float(cost[0]), 0.0, n_paths)
    se = float(np.std(cost, ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    return MCEstimate(float(np.mean(cost)), se, n_paths)


def dpp_consistency(problem: ControlProblem, rp: RoughPath, lattice: StateLattice,
                    quad_nodes: int, split_index: int,
                    full: ValueGrid | None = None) -> float:
    """Max lattice gap at ``t_0`` between a two-stage and a single-pass solve."""
    n = rp.n_steps
    if not 0 < split_index < n:
        raise ValueError(f"split index must lie strictly inside 0..{n}")
    if full is None:
        full = dpp_solve(problem, rp, lattice, quad_nodes)
    tail = dpp_solve(problem.restrict(split_index, n), rp.restrict(split_index, n),
                     lattice, quad_nodes)
    head_problem = replace(problem.restrict(0, split_index), g=tail.terminal_cost(0))
    head = dpp_solve(head_problem, rp.restrict(0, split_index), lattice, quad_nodes)
    return float(np.max(np.abs(head.values[0] - full.values[0])))


@dataclass(frozen=True)
class PerturbationReport:
    rho: float
    sup_dV: float
    ratio: float


def value_continuity_probe(problem: ControlProblem, rp: RoughPath, rp_perturbed: RoughPath,
                           lattice: StateLattice, quad_nodes: int = 5,
                           alpha: float = 0.45) -> PerturbationReport:
    """Empirical Lipschitz ratio of the value at ``t_0`` in the rough path."""
    if rp.grid != rp_perturbed.grid:
        raise GridError("perturbed rough path must share the grid")
    v1 = dpp_solve(problem, rp, lattice, quad_nodes).values[0]
    v2 = dpp_solve(problem, rp_perturbed, lattice, quad_nodes).values[0]
    rho = rho_alpha(rp, rp_perturbed, alpha)
    sup = float(np.max(np.abs(v1 - v2)))
    return PerturbationReport(rho, sup, sup / rho if rho > 0 else 0.0)


def augment_running_cost(problem: ControlProblem) -> ControlProblem:
    """Move ``ℓ`` into an extra state ``dZ = ℓ dt`` with terminal cost ``g + z``."""
    co = problem.coeffs
    d = co.d_y

    def b(t, y, a):
        base = co.b(t, y[..., :d], a)
        run = problem.running(t, y[..., :d], a)
        base, run = np.broadcast_arrays(base, run[..., None])
        return np.concatenate([base, run], axis=-1)

    def pad_rows(fn):
        if fn is None:
            return None

        def g(t, y, *args):
            m = fn(t, y[..., :d], *args)
            z = np.zeros(m.shape[:-2] + (1, m.shape[-1]))
            return np.concatenate([m, z], axis=-2)
        return g

    Df = None
    if co.Df is not None:
        def Df(t, y):
            m = co.Df(t, y[..., :d])          # (..., d, d_x, d)
            m = np.concatenate([m, np.zeros(m.shape[:-3] + (1,) + m.shape[-2:])], axis=-3)
            return np.concatenate([m, np.zeros(m.shape[:-1] + (1,))], axis=-1)

    fprime = None
    if co.fprime is not None:
        def fprime(t, y):
            m = co.fprime(t, y[..., :d])
            return np.concatenate([m, np.zeros(m.shape[:-3] + (1,) + m.shape[-2:])], axis=-3)

    aug = CoefficientSet(d + 1, co.d_x, co.d_b, co.d_a, b, pad_rows(co.sigma),
                         pad_rows(co.f), Df, fprime, dict(co.bounds))
    g0 = problem.g
    return replace(problem, coeffs=aug, g=lambda y: g0(y[..., :d]) + y[..., d], ell=None)
