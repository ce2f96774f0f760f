"""Closed-form benchmark problems and their control-problem encodings.

Two explicit problems serve as ground truth for the DP solver:

* linear target: ``dY = η dt + f(Y) d𝐗`` with linear ``f``, ``|η| <= 1`` and
  cost ``|<v, Y_T> - 1|``; its value is ``[1 - M_T]^+`` where ``M_T`` is the
  time integral of ``|(P_{T<-r})^T v|``.
* quadratic HJB: state ``(y, z)`` with ``dY = z σ dB + z d𝐗``, ``dZ = η dt``
  and reward ``E[Y_T - ∫ ε η² dt]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import ControlProblem, control_box
from .roughpath import GridError, RoughPath, TimeGrid
from .rsde import CoefficientSet, linear_flow


@dataclass(frozen=True, eq=False)
class LinearTargetSpec:
    F: np.ndarray          # (d_X, d_Y, d_Y)
    v: np.ndarray          # (d_Y,)
    horizon: TimeGrid

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        if F.ndim == 2:
            F = F[None]
        v = np.asarray(self.v, dtype=float).reshape(-1)
        if F.shape[1:] != (v.size, v.size):
            raise ValueError(f"F has shape {F.shape}, incompatible with v of size {v.size}")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "v", v)

    @property
    def d_y(self) -> int:
        return self.v.size

    @property
    def d_x(self) -> int:
        return self.F.shape[0]


@dataclass(frozen=True, eq=False)
class LinearTargetResult:
    value: float
    M_T: float
    theta_norm: np.ndarray
    control: np.ndarray     # (n, d_Y), left-node optimal control
    degenerate: np.ndarray  # steps where Θ vanished


def linear_target_value(spec: LinearTargetSpec, rp: RoughPath) -> LinearTargetResult:
    if rp.grid != spec.horizon:
        raise GridError("rough path grid differs from the problem horizon")
    flow = linear_flow(spec.F, rp, spec.v)
    norms = flow.theta_norm
    h = rp.grid.h
    M = float(h * (0.5 * norms[0] + norms[1:-1].sum() + 0.5 * norms[-1]))
    theta = flow.theta[:-1]
    nrm = norms[:-1]
    degenerate = nrm == 0.0
    unit = np.zeros_like(theta)
    unit[~degenerate] = theta[~degenerate] / nrm[~degenerate, None]
    control = unit / M if M > 1.0 else unit
    return LinearTargetResult(max(0.0, 1.0 - M), M, norms, control,
                              np.flatnonzero(degenerate))


def linear_target_coefficients(spec: LinearTargetSpec) -> CoefficientSet:
    F = spec.F
    d_y, d_x = spec.d_y, spec.d_x

    def b(t, y, a):
        return np.broadcast_to(a, np.broadcast_shapes(np.shape(y), np.shape(a))).copy()

    def f(t, y):
        # f^a_i(y) = (F_i y)^a
        return np.einsum("iak,...k->...ai", F, y)

    def Df(t, y):
        return np.broadcast_to(F.transpose(1, 0, 2), np.shape(y)[:-1] + (d_y, d_x, d_y))

    bound = float(np.max(np.abs(F))) if np.any(F) else 1.0
    return CoefficientSet(d_y, d_x, 0, d_y, b, None, f, Df, None,
                          {"b_sup": 1.0, "f_lip": bound})


def direction_controls(d_y: int, n: int) -> np.ndarray:
    """Control set for ``|η| <= 1``: a symmetric grid on ``[-1, 1]`` in one
    dimension, ``n`` unit directions plus the origin in two."""
    if d_y == 1:
        return np.linspace(-1.0, 1.0, n)[:, None]
    if d_y == 2:
        ang = 2 * np.pi * np.arange(n) / n
        return np.vstack([np.stack([np.cos(ang), np.sin(ang)], axis=1), np.zeros((1, 2))])
    raise ValueError("direction controls are available for d_Y <= 2")


def linear_target_problem(spec: LinearTargetSpec, n_controls: int = 21,
                          controls: np.ndarray | None = None) -> ControlProblem:
    v = spec.v
    if controls is None:
        controls = direction_controls(spec.d_y, n_controls)
    return ControlProblem(linear_target_coefficients(spec),
                          lambda y: np.abs(y @ v - 1.0), controls, spec.horizon)


@dataclass(frozen=True)
class HjbQuadraticSpec:
    epsilon: float
    sigma: float
    horizon: TimeGrid
    eta_max: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.eta_max > 0:
            raise ValueError("eta_max must be positive")

    def check_box(self, X) -> None:
        """The control box must contain the unconstrained optimiser."""
        x = np.asarray(X, dtype=float).reshape(-1)
        need = np.max(np.abs(x[-1] - x)) / (2 * self.epsilon) + 1.0
        if self.eta_max < need:
            raise ValueError(f"eta_max={self.eta_max} is below the required {need:.6g}")


def _trapezoid(vals: np.ndarray, h: float) -> float:
    if vals.size < 2:
        return 0.0
    return float(h * (0.5 * vals[0] + vals[1:-1].sum() + 0.5 * vals[-1]))


def hjb_quadratic_value(spec: HjbQuadraticSpec, X, s: float, y, z):
    """``y + (X_T - X_s) z + (1/4ε) ∫_s^T (X_T - X_r)² dr`` (trapezoid).

    The integrand uses the integration variable ``r``; the form with the
    outer variable fails the PDE residual check in the tests.
    """
    x = np.asarray(X.values[:, 0] if isinstance(X, RoughPath) else X, dtype=float).reshape(-1)
    grid = spec.horizon
    if x.size != grid.n_steps + 1:
        raise GridError("scalar path length does not match the horizon")
    k = grid.index_of(s)
    tail = (x[-1] - x[k:]) ** 2
    c = _trapezoid(tail, grid.h) / (4 * spec.epsilon)
    return np.asarray(y) + (x[-1] - x[k]) * np.asarray(z) + c


def hjb_pde_residual(epsilon: float, sigma: float, T: float, t, y, z,
                     X=lambda t: t, Xdot=lambda t: 1.0, printed: bool = False):
    """Residual of ``-∂_t V = ½ z² σ² V_yy + (1/4ε) V_z² + z V_y Ẋ`` for
    the closed-form candidate with a smooth driver, derivatives by hand.

    ``printed=True`` evaluates the variant whose integrand is
    ``(X_T - X_t)²`` with the outer variable, for comparison.
    """
    t, y, z = np.broadcast_arrays(np.asarray(t, float), np.asarray(y, float),
                                  np.asarray(z, float))
    gap = X(T) - X(t)
    v_y, v_yy, v_z = 1.0, 0.0, gap
    if printed:
        # V = y + gap z + gap² (T - t) / (4ε)
        dv_dt = -Xdot(t) * z + (-2 * gap * Xdot(t) * (T - t) - gap ** 2) / (4 * epsilon)
    else:
        dv_dt = -Xdot(t) * z - gap ** 2 / (4 * epsilon)
    rhs = 0.5 * z ** 2 * sigma ** 2 * v_yy + v_z ** 2 / (4 * epsilon) + z * v_y * Xdot(t)
    return -dv_dt - rhs


def hjb_coefficients(spec: HjbQuadraticSpec) -> CoefficientSet:
    sig = spec.sigma

    def b(t, y, a):
        shape = np.broadcast_shapes(np.shape(y)[:-1], np.shape(a)[:-1])
        out = np.zeros(shape + (2,))
        out[..., 1] = np.broadcast_to(a[..., 0], shape)
        return out

    def sigma(t, y, a):
        shape = np.broadcast_shapes(np.shape(y)[:-1], np.shape(a)[:-1])
        out = np.zeros(shape + (2, 1))
        out[..., 0, 0] = np.broadcast_to(sig * y[..., 1], shape)
        return out

    def f(t, y):
        out = np.zeros(np.shape(y)[:-1] + (2, 1))
        out[..., 0, 0] = y[..., 1]
        return out

    def Df(t, y):
        out = np.zeros(np.shape(y)[:-1] + (2, 1, 2))
        out[..., 0, 0, 1] = 1.0
        return out

    return CoefficientSet(2, 1, 1, 1, b, sigma, f, Df)


def hjb_quadratic_problem(spec: HjbQuadraticSpec, n_controls: int = 21) -> ControlProblem:
    if n_controls % 2 == 0:
        raise ValueError("use an odd number of controls so 0 is representable")
    eps = spec.epsilon
    controls = control_box(-spec.eta_max, spec.eta_max, n_controls)
    return ControlProblem(hjb_coefficients(spec), lambda y: y[..., 0], controls,
                          spec.horizon, ell=lambda t, y, a: -eps * a[..., 0] ** 2,
                          sense="max")
