"""Subcommand configurations and their implementations.

Each command takes a validated config model and returns a ``RunResult``:
CSV tables keyed by file name plus manifest extras.  Nothing here touches
the file system except reading ``lift`` input samples.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import catalogue
from .control import dpp_solve, value_continuity_probe
from .examples import linear_target_value
from .integrate import ControlledPath, rough_integral
from .randomize import RandomizationSpec, closed_form_inner, dpp_inner, pathwise_consistency, \
    sample_randomized_values
from .roughpath import TimeGrid, brownian_rough_path, lift_piecewise_linear, pair_stride
from .rsde import NoiseBundle, solve_rsde


class Config(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LiftConfig(Config):
    path: str = "identity"
    input: Optional[str] = None
    start: float = 0.0
    end: float = 1.0
    n_steps: int = Field(64, ge=1)


class BrownianConfig(Config):
    seed: int = 0
    dim: int = Field(1, ge=1, le=8)
    start: float = 0.0
    end: float = 1.0
    n_steps: int = Field(64, ge=1)
    refinement: int = Field(16, ge=1)
    mode: Literal["ito", "strato"] = "ito"


class IntegrateConfig(Config):
    path: str = "identity"
    integrand: Literal["sin", "identity-level2", "constant"] = "sin"
    end: float = 1.0
    n_steps: int = Field(64, ge=1)


class SolveConfig(Config):
    coefficients: str = "exp-rough"
    path: str = "identity"
    seed: int = 0
    n_paths: int = Field(4, ge=1)
    end: float = 1.0
    n_steps: int = Field(64, ge=1)
    refinement: int = Field(16, ge=1)
    y0: list[float] = [1.0]
    control: list[float] = [0.0]


class DppConfig(Config):
    problem: str = "smooth"
    n_steps: Optional[int] = Field(None, ge=1)
    nodes: Optional[int] = Field(None, ge=2)
    n_controls: Optional[int] = Field(None, ge=1)
    quad_nodes: Optional[int] = Field(None, ge=1)
    slices: Literal["all", "first"] = "all"


class LinearTargetConfig(Config):
    preset: Literal["f0", "ln2", "ln1.5", "nilpotent"] = "f0"
    n_steps: Optional[int] = Field(None, ge=1)
    nodes: Optional[int] = Field(None, ge=2)
    n_controls: int = Field(21, ge=1)


class HjbConfig(Config):
    epsilon: float = Field(0.5, gt=0)
    sigma: float = 1.0
    n_steps: int = Field(40, ge=1)
    nodes: int = Field(101, ge=3)
    n_controls: int = Field(21, ge=1)
    quad_nodes: int = Field(5, ge=1)


class ContinuityConfig(Config):
    problem: Literal["smooth"] = "smooth"
    path: str = "sine"
    eps: list[float] = [0.2, 0.1, 0.05]
    alpha: float = Field(0.45, gt=1 / 3, le=0.5)
    n_steps: int = Field(20, ge=1)
    nodes: int = Field(101, ge=2)


class PathwiseConfig(Config):
    coefficients: str = "exp-rough"
    seed: int = 0
    n0: int = Field(16, ge=1)
    levels: int = Field(4, ge=2)
    n_paths: int = Field(200, ge=1)
    end: float = 1.0
    y0: list[float] = [1.0]
    control: list[float] = [0.0]
    refinement: int = Field(1, ge=1)


class RandomizeConfig(Config):
    inner: str = "linear-target-ln2"
    seed: int = 0
    n_outer: int = Field(100, ge=1)
    n_steps: int = Field(32, ge=1)
    refinement: int = Field(1, ge=1)
    mode: Literal["ito", "strato"] = "strato"


class AcceptConfig(Config):
    only: list[int] = []


CONFIGS = {
    "lift": LiftConfig,
    "brownian": BrownianConfig,
    "integrate": IntegrateConfig,
    "solve": SolveConfig,
    "dpp": DppConfig,
    "example linear-target": LinearTargetConfig,
    "example hjb-quadratic": HjbConfig,
    "continuity-probe": ContinuityConfig,
    "pathwise-check": PathwiseConfig,
    "randomize": RandomizeConfig,
    "accept": AcceptConfig,
}


@dataclass
class Table:
    header: list[str]
    rows: list[list]


@dataclass
class RunResult:
    tables: dict[str, Table]
    extra: dict = field(default_factory=dict)
    ok: bool = True


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return "" if x is None else str(x)


def _rough_path_table(rp) -> Table:
    d = rp.dim
    header = ["k", "t"] + [f"X_{i + 1}" for i in range(d)] + \
        [f"XX_{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    rows = []
    t = rp.grid.times
    for k in range(rp.n_steps + 1):
        xx = list(rp.level2_step[k].ravel()) if k < rp.n_steps else [None] * d * d
        rows.append([k, t[k], *rp.values[k], *xx])
    return Table(header, rows)


def _read_samples(path: str):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric sample value ({exc})") from None
    if data.ndim != 2 or data.shape[1] < 2:
        raise ValueError(f"{path}: need columns t, X_1, ...")
    return data[:, 0], data[:, 1:]


def run_lift(cfg: LiftConfig) -> RunResult:
    if cfg.input:
        times, values = _read_samples(cfg.input)
        rp = lift_piecewise_linear(times, values)
    else:
        rp = catalogue.path(cfg.path, TimeGrid(cfg.start, cfg.end, cfg.n_steps))
    return RunResult({"roughpath.csv": _rough_path_table(rp)},
                     {"seed": None, "mode": rp.mode, "n": rp.n_steps, "dim": rp.dim,
                      "refinement": None, "pair_stride": pair_stride(rp.n_steps)})


def run_brownian(cfg: BrownianConfig) -> RunResult:
    grid = TimeGrid(cfg.start, cfg.end, cfg.n_steps)
    rp = brownian_rough_path(cfg.seed, cfg.dim, grid, cfg.refinement, cfg.mode)
    return RunResult({"roughpath.csv": _rough_path_table(rp)},
                     {"seed": cfg.seed, "mode": rp.mode, "n": rp.n_steps, "dim": rp.dim,
                      "refinement": rp.meta["refinement"]})


def run_integrate(cfg: IntegrateConfig) -> RunResult:
    grid = TimeGrid(0.0, cfg.end, cfg.n_steps)
    rp = catalogue.path(cfg.path, grid)
    x, d = rp.values, rp.dim
    if cfg.integrand == "sin":
        cp = ControlledPath(grid, np.sin(x), np.cos(x)[:, :, None] * np.eye(d)[None])
    elif cfg.integrand == "identity-level2":
        cp = ControlledPath(grid, x - x[0], np.broadcast_to(np.eye(d), (grid.n_steps + 1, d, d)))
    else:
        cp = ControlledPath(grid, np.ones_like(x), np.zeros((grid.n_steps + 1, d, d)))
    out = rough_integral(cp, rp)
    flat = out.reshape(out.shape[0], -1)
    if d == 1:
        names = [f"I_{a + 1}" for a in range(cp.m)]
    else:
        names = [f"I_{a + 1}_{j + 1}" for a in range(cp.m) for j in range(d)]
    t = grid.times
    rows = [[k, t[k], *flat[k]] for k in range(grid.n_steps + 1)]
    return RunResult({"integral.csv": Table(["k", "t"] + names, rows)},
                     {"mode": rp.mode, "n": grid.n_steps})


def run_solve(cfg: SolveConfig) -> RunResult:
    co = catalogue.coefficients(cfg.coefficients)
    grid = TimeGrid(0.0, cfg.end, cfg.n_steps)
    if cfg.path in ("brownian-ito", "brownian-strato"):
        rp = brownian_rough_path(cfg.seed, co.d_x, grid, cfg.refinement, cfg.path.split("-")[1])
    else:
        rp = catalogue.path(cfg.path, grid)
    if len(cfg.y0) != co.d_y or len(cfg.control) != co.d_a:
        raise ValueError(f"y0 needs {co.d_y} entries and control {co.d_a}")
    noise = NoiseBundle.sample(cfg.seed, cfg.n_paths, grid, co.d_b if co.has_noise else 0)
    traj = solve_rsde(co, np.array(cfg.control), rp, noise, np.array(cfg.y0))
    t = grid.times
    rows = [[p, k, t[k], *traj.states[p, k]]
            for p in range(cfg.n_paths) for k in range(grid.n_steps + 1)]
    header = ["path", "k", "t"] + [f"Y_{i + 1}" for i in range(co.d_y)]
    return RunResult({"trajectories.csv": Table(header, rows)}, {"mode": rp.mode})


def _preset_kwargs(cfg) -> dict:
    kw = {}
    for key in ("n_steps", "nodes", "n_controls"):
        val = getattr(cfg, key, None)
        if val is not None:
            kw[key] = val
    return kw


def run_dpp(cfg: DppConfig) -> RunResult:
    preset = catalogue.problem_preset(cfg.problem, **_preset_kwargs(cfg))
    q = cfg.quad_nodes or preset.quad_nodes
    vg = dpp_solve(preset.problem, preset.rough_path, preset.lattice, q)
    lat = preset.lattice
    pts = lat.points()
    ids = np.stack(np.unravel_index(np.arange(lat.size), lat.shape), axis=-1)
    n = vg.grid.n_steps
    ks = range(n + 1) if cfg.slices == "all" else [0]
    rows = []
    for k in ks:
        pol = vg.policy[k] if k < n else np.full(lat.size, -1)
        for i in range(lat.size):
            rows.append([k, *ids[i], *pts[i], vg.values[k, i], pol[i]])
    d = lat.dim
    header = ["k"] + [f"i_{a + 1}" for a in range(d)] + [f"y_{a + 1}" for a in range(d)] + \
        ["V", "policy_index"]
    extra = {"problem": preset.name, "quad_nodes": q, "n_steps": n,
             "lattice": [list(a) for a in lat.axes_spec], "n_controls": len(vg.controls),
             "boundary_hits": vg.boundary_hits, "bounds_ok": vg.meta["bounds_ok"]}
    return RunResult({"values.csv": Table(header, rows)}, extra)


def _example_table(cf: float, v: float, n: int, nodes, n_controls: int, q: int,
                   name: str) -> Table:
    return Table(["preset", "closed_form", "dpp_value", "abs_gap", "n_steps", "nodes",
                  "n_controls", "quad_nodes"],
                 [[name, cf, v, abs(v - cf), n, nodes, n_controls, q]])


def run_linear_target(cfg: LinearTargetConfig) -> RunResult:
    preset = catalogue.linear_target(cfg.preset, **_preset_kwargs(cfg))
    vg = dpp_solve(preset.problem, preset.rough_path, preset.lattice, 1)
    v = float(vg.value(0, np.array(preset.y0)))
    cf = linear_target_value(preset.spec, preset.rough_path)
    nodes = "x".join(str(s) for s in preset.lattice.shape)
    t = _example_table(cf.value, v, vg.grid.n_steps, nodes, len(vg.controls), 1, cfg.preset)
    return RunResult({"linear_target.csv": t}, {"M_T": cf.M_T})


def run_hjb(cfg: HjbConfig) -> RunResult:
    preset = catalogue.hjb_quadratic(cfg.n_steps, cfg.nodes, cfg.n_controls, cfg.epsilon,
                                     cfg.sigma)
    vg = dpp_solve(preset.problem, preset.rough_path, preset.lattice, cfg.quad_nodes)
    v = float(vg.value(0, np.array(preset.y0)))
    from .examples import hjb_quadratic_value
    cf = float(hjb_quadratic_value(preset.spec, preset.rough_path, 0.0, 0.0, 0.0))
    nodes = "x".join(str(s) for s in preset.lattice.shape)
    t = _example_table(cf, v, cfg.n_steps, nodes, cfg.n_controls, cfg.quad_nodes, "hjb-quadratic")
    return RunResult({"hjb_quadratic.csv": t}, {"eta_max": preset.spec.eta_max})


def run_continuity(cfg: ContinuityConfig) -> RunResult:
    preset = catalogue.smooth_problem(cfg.n_steps, cfg.nodes, path_name=cfg.path)
    rows = []
    for eps in cfg.eps:
        rp2 = catalogue.perturbed(cfg.path, preset.rough_path.grid, eps)
        rep = value_continuity_probe(preset.problem, preset.rough_path, rp2, preset.lattice,
                                     preset.quad_nodes, cfg.alpha)
        rows.append([eps, rep.rho, rep.sup_dV, rep.ratio])
    return RunResult({"continuity.csv": Table(["eps", "rho", "sup_dV", "ratio"], rows)})


def run_pathwise(cfg: PathwiseConfig) -> RunResult:
    co = catalogue.coefficients(cfg.coefficients)
    meshes = [cfg.n0 * 2 ** i for i in range(cfg.levels)]
    res = pathwise_consistency(co, np.array(cfg.control), cfg.seed, meshes, cfg.n_paths,
                               np.array(cfg.y0), cfg.end, refinement=cfg.refinement)
    rows = [[r.n, r.mean_gap, r.paths] for r in res]
    return RunResult({"pathwise.csv": Table(["n", "mean_gap", "paths"], rows)},
                     {"seed": cfg.seed, "mode": "ito"})


def run_randomize(cfg: RandomizeConfig) -> RunResult:
    if cfg.inner.startswith("linear-target-"):
        preset = catalogue.linear_target(cfg.inner[len("linear-target-"):], n_steps=cfg.n_steps)
        inner = closed_form_inner(preset.spec)
    elif cfg.inner.startswith("dpp:"):
        preset = catalogue.problem_preset(cfg.inner[4:], n_steps=cfg.n_steps)
        inner = dpp_inner(preset.problem, preset.lattice, preset.y0, preset.quad_nodes)
    else:
        raise ValueError(f"inner must be 'linear-target-<preset>' or 'dpp:<problem>', "
                         f"got {cfg.inner!r}")
    dim = preset.problem.coeffs.d_x
    spec = RandomizationSpec(cfg.seed, cfg.n_outer, preset.rough_path.grid, dim,
                             cfg.refinement, cfg.mode)
    res = sample_randomized_values(spec, inner)
    rows = [[i, v] for i, v in enumerate(res.samples)]
    summary = {"mean": res.mean, "stderr": res.stderr, "min": res.min, "max": res.max}
    return RunResult({"samples.csv": Table(["sample", "value"], rows)},
                     {"seed": cfg.seed, "mode": cfg.mode, "summary": summary})


def run_accept(cfg: AcceptConfig) -> RunResult:
    from .acceptance import run_all
    results = run_all(cfg.only or None, echo=True)
    # runtimes stay on the console so the CSV is reproducible
    rows = [[r.criterion, r.name, r.passed, r.detail] for r in results]
    return RunResult({"acceptance.csv": Table(["criterion", "check", "passed", "detail"], rows)},
                     ok=all(r.passed for r in results))


RUNNERS = {
    "lift": run_lift,
    "brownian": run_brownian,
    "integrate": run_integrate,
    "solve": run_solve,
    "dpp": run_dpp,
    "example linear-target": run_linear_target,
    "example hjb-quadratic": run_hjb,
    "continuity-probe": run_continuity,
    "pathwise-check": run_pathwise,
    "randomize": run_randomize,
    "accept": run_accept,
}

