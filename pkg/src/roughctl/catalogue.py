"""Named coefficient sets, problems, paths and resolutions.

The CLI only ever refers to these by name; every acceptance check runs on a
preset from here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .control import ControlProblem, StateLattice, control_box
from .examples import (HjbQuadraticSpec, LinearTargetSpec, hjb_quadratic_problem,
                       linear_target_problem)
from .roughpath import RoughPath, TimeGrid, lift_function
from .rsde import CoefficientSet


def _zeros(y, a, d):
    return np.zeros(np.broadcast_shapes(np.shape(y)[:-1], np.shape(a)[:-1]) + (d,))


# -- coefficient sets -------------------------------------------------------

def exp_rough() -> CoefficientSet:
    """``dY = Y d𝐗`` (scalar)."""
    return CoefficientSet(
        1, 1, 0, 1,
        b=lambda t, y, a: _zeros(y, a, 1),
        f=lambda t, y: y[..., None],
        Df=lambda t, y: np.ones(np.shape(y)[:-1] + (1, 1, 1)))


def constant_drift(c: float = 1.0) -> CoefficientSet:
    return CoefficientSet(1, 1, 0, 1, b=lambda t, y, a: _zeros(y, a, 1) + c,
                          bounds={"b_sup": abs(c) or 1.0})


def generic_smooth(scale: float = 1.0) -> CoefficientSet:
    """Bounded smooth scalar RSDE with control entering the drift:

    ``dY = (a - ½ sin Y) dt + (0.3 + 0.2 cos Y) dB + 0.5 s sin(Y + 1) d𝐗``.
    """
    def b(t, y, a):
        return a - 0.5 * np.sin(y)

    def sigma(t, y, a):
        s = 0.3 + 0.2 * np.cos(y)
        return np.broadcast_to(s, np.broadcast_shapes(np.shape(y), np.shape(a)))[..., None]

    def f(t, y):
        return (0.5 * scale * np.sin(y + 1.0))[..., None]

    def Df(t, y):
        return (0.5 * scale * np.cos(y + 1.0))[..., None, None]

    return CoefficientSet(1, 1, 1, 1, b, sigma, f, Df,
                          bounds={"b_sup": 1.5, "sigma_sup": 0.5, "f_sup": 0.5 * scale or 1.0})


def ou_noise() -> CoefficientSet:
    """``dY = (a - Y) dt + 0.5 dB`` with no rough driver."""
    def sigma(t, y, a):
        return np.full(np.broadcast_shapes(np.shape(y), np.shape(a)) + (1,), 0.5)

    return CoefficientSet(1, 1, 1, 1, b=lambda t, y, a: a - y, sigma=sigma)


COEFFICIENTS = {
    "exp-rough": exp_rough,
    "constant-drift": constant_drift,
    "generic-smooth": generic_smooth,
    "ou-noise": ou_noise,
    "generic-smooth-no-rough": lambda: generic_smooth(0.0),
}


def coefficients(name: str) -> CoefficientSet:
    try:
        co = COEFFICIENTS[name]()
    except KeyError:
        raise KeyError(f"unknown coefficient preset {name!r}; choose from {sorted(COEFFICIENTS)}")
    if name == "generic-smooth-no-rough":
        co = CoefficientSet(co.d_y, co.d_x, co.d_b, co.d_a, co.b, co.sigma)
    return co


# -- driving paths -------------------------------------------------------------

PATHS = {
    "identity": lambda t: t,
    "square": lambda t: (t, t * t),
    "sine": lambda t: math.sin(2 * math.pi * t),
    "constant": lambda t: 0.3,
}


def bump(T: float) -> callable:
    return lambda t: math.sin(math.pi * t / T) ** 2


def path(name: str, grid: TimeGrid) -> RoughPath:
    if name not in PATHS:
        raise KeyError(f"unknown path preset {name!r}; choose from {sorted(PATHS)}")
    return lift_function(PATHS[name], grid)


def perturbed(name: str, grid: TimeGrid, eps: float) -> RoughPath:
    base, b = PATHS[name], bump(grid.end - grid.start)
    return lift_function(lambda t: np.atleast_1d(base(t)) + eps * np.atleast_1d(b(t - grid.start)),
                         grid)


# -- control problems ----------------------------------------------------------

@dataclass(frozen=True)
class ProblemPreset:
    """A control problem together with its default resolution."""

    name: str
    problem: ControlProblem
    rough_path: RoughPath
    lattice: StateLattice
    quad_nodes: int
    y0: tuple
    closed_form: float | None = None
    spec: object = None


LINEAR_TARGET = {
    # name: (F, v, T, n_steps, lattice axes)
    "f0": ([[[0.0]]], [1.0], 0.5, 50, [(-1.0, 1.0, 201)]),
    "ln2": ([[[1.0]]], [1.0], math.log(2.0), 64, [(0.0, 1.0, 201)]),
    "ln1.5": ([[[1.0]]], [1.0], math.log(1.5), 160, [(-0.25, 1.0, 201)]),
    "nilpotent": ([[[0.0, 1.0], [0.0, 0.0]]], [1.0, 0.0], 0.5, 50,
                  [(-0.6, 1.1, 201), (-0.8, 0.8, 201)]),
}


def linear_target(name: str, n_steps: int | None = None, n_controls: int = 21,
                  nodes: int | None = None) -> ProblemPreset:
    from .examples import linear_target_value
    if name not in LINEAR_TARGET:
        raise KeyError(f"unknown linear-target preset {name!r}; choose from {sorted(LINEAR_TARGET)}")
    F, v, T, n, axes = LINEAR_TARGET[name]
    grid = TimeGrid(0.0, T, n_steps or n)
    if nodes:
        axes = [(lo, hi, nodes) for lo, hi, _ in axes]
    rp = lift_function(PATHS["identity"], grid)
    spec = LinearTargetSpec(F, v, grid)
    problem = linear_target_problem(spec, n_controls)
    cf = linear_target_value(spec, rp).value
    return ProblemPreset(f"linear-target-{name}", problem, rp, StateLattice(axes), 1,
                         tuple(0.0 for _ in v), cf, spec)


def hjb_quadratic(n_steps: int = 40, nodes: int = 101, n_controls: int = 21,
                  epsilon: float = 0.5, sigma: float = 1.0) -> ProblemPreset:
    grid = TimeGrid(0.0, 1.0, n_steps)
    rp = lift_function(PATHS["identity"], grid)
    eta_max = float(np.max(np.abs(rp.values[-1] - rp.values))) / (2 * epsilon) + 1.0
    spec = HjbQuadraticSpec(epsilon, sigma, grid, eta_max)
    spec.check_box(rp.values)
    problem = hjb_quadratic_problem(spec, n_controls)
    lattice = StateLattice([(-8.0, 8.0, nodes), (-2.0, 2.0, nodes)])
    return ProblemPreset("hjb-quadratic", problem, rp, lattice, 5, (0.0, 0.0),
                         1.0 / (12 * epsilon), spec)


def smooth_problem(n_steps: int = 20, nodes: int = 101, n_controls: int = 5,
                   path_name: str = "sine", zero_cost: bool = False,
                   sense: str = "min") -> ProblemPreset:
    """Scalar problem with bounded smooth coefficients and costs."""
    grid = TimeGrid(0.0, 1.0, n_steps)
    co = generic_smooth()
    if zero_cost:
        g = lambda y: np.zeros(np.shape(y)[:-1])
        ell = lambda t, y, a: np.zeros(np.broadcast_shapes(np.shape(y)[:-1], np.shape(a)[:-1]))
    else:
        g = lambda y: np.tanh(y[..., 0] - 0.5) ** 2
        ell = lambda t, y, a: 0.2 * a[..., 0] ** 2 + 0.1 * np.cos(y[..., 0])
    controls = control_box(-1.0, 1.0, n_controls)
    problem = ControlProblem(co, g, controls, grid, ell=ell, sense=sense)
    return ProblemPreset("smooth" + ("-zero" if zero_cost else ""), problem,
                         path(path_name, grid), StateLattice([(-3.0, 3.0, nodes)]), 5, (0.0,))


def problem_preset(name: str, **kw) -> ProblemPreset:
    if name.startswith("linear-target-"):
        return linear_target(name[len("linear-target-"):], **kw)
    if name == "hjb-quadratic":
        return hjb_quadratic(**kw)
    if name == "smooth":
        return smooth_problem(**kw)
    if name == "smooth-zero":
        return smooth_problem(zero_cost=True, **kw)
    raise KeyError(f"unknown problem preset {name!r}")


PROBLEMS = ["linear-target-" + k for k in LINEAR_TARGET] + ["hjb-quadratic", "smooth", "smooth-zero"]
