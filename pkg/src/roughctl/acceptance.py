"""Acceptance checks with pinned tolerances and runtime limits.

Each ``criterion_N`` returns one or more :class:`CheckResult`; ``run_all``
prints one PASS/FAIL line per check.
"""
from __future__ import annotations

import filecmp
import math
import os
import tempfile
import time
from dataclasses import dataclass, replace

import numpy as np

from . import catalogue
from .control import dpp_consistency, dpp_solve, value_continuity_probe
from .examples import hjb_pde_residual
from .integrate import ControlledPath, rough_integral
from .randomize import pathwise_consistency
from .roughpath import (TimeGrid, brownian_increments, brownian_lift_steps, brownian_rough_path,
                        geometricity_defect, level2, lift_function, lift_piecewise_linear)
from .rsde import integrate_paths


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _random_lift(rng, d, n):
    t = np.linspace(0.0, rng.uniform(0.5, 2.0), n + 1)
    x = np.cumsum(rng.standard_normal((n + 1, d)), axis=0) * rng.uniform(0.1, 3.0)
    return lift_piecewise_linear(t, x)


def fitted_order(meshes, errors) -> float:
    """Least-squares slope of ``log error`` against ``log h``."""
    h = 1.0 / np.asarray(meshes, float)
    return float(np.polyfit(np.log(h), np.log(np.asarray(errors, float)), 1)[0])


# -- 1 -----------------------------------------------------------------------

def criterion_1() -> list[CheckResult]:
    def run():
        rng = np.random.default_rng(101)
        chen = geo = 0.0
        for _ in range(100):
            d, n = int(rng.integers(1, 4)), int(rng.integers(2, 257))
            rp = _random_lift(rng, d, n)
            geo = max(geo, geometricity_defect(rp))
            # second-level size of this path: squared oscillation or largest 𝕏_{0,k}
            osc = np.ptp(rp.values, axis=0).max()
            scale = max(osc * osc, np.abs(rp.level2_from_start()).max(), 1e-300)
            for _ in range(5):
                i, j, k = sorted(rng.choice(n + 1, 3, replace=False))
                lhs = level2(rp, i, k)
                dij = rp.values[j] - rp.values[i]
                djk = rp.values[k] - rp.values[j]
                rhs = level2(rp, i, j) + level2(rp, j, k) + np.outer(dij, djk)
                chen = max(chen, float(np.abs(lhs - rhs).max() / scale))
        gap = 0.0
        for seed in range(20):
            grid = TimeGrid(0.0, 1.0, int(rng.integers(1, 257)))
            ito = brownian_rough_path(seed, 1, grid, mode="ito")
            strato = brownian_rough_path(seed, 1, grid, mode="strato")
            diff = strato.level2_step[:, 0, 0] - ito.level2_step[:, 0, 0]
            gap = max(gap, float(np.max(np.abs(diff - grid.h / 2)) / grid.h))
        return chen, geo, gap

    (chen, geo, gap), sec = _timed(run)
    ok = chen <= 1e-12 and geo <= 1e-12 and gap <= 1e-12 and sec < 10
    return [CheckResult(1, "chen-geometricity", ok,
                        f"chen_rel={chen:.2e} geo={geo:.2e} ito_strato_rel={gap:.2e}", sec)]


# -- 2 -----------------------------------------------------------------------

def criterion_2() -> list[CheckResult]:
    def run():
        rng = np.random.default_rng(202)
        worst = 0.0
        for n in (8, 64, 512):
            for _ in range(20):
                d = int(rng.integers(1, 4))
                rp = _random_lift(rng, d, n)
                z = rp.values - rp.values[0]
                cp = ControlledPath(rp.grid, z, np.broadcast_to(np.eye(d), (n + 1, d, d)))
                integral = rough_integral(cp, rp)
                ref = rp.level2_from_start()
                scale = max(np.abs(ref).max(), 1e-300)
                worst = max(worst, float(np.abs(integral - ref).max() / scale))
                end = level2(rp, 0, n)
                worst = max(worst, float(np.abs(integral[-1] - end).max() / scale))
        return worst

    worst, sec = _timed(run)
    ok = worst <= 1e-12 and sec < 5
    return [CheckResult(2, "rough-integral-exactness", ok,
                        f"max_rel_err={worst:.2e}", sec)]


# -- 3 -----------------------------------------------------------------------

def criterion_3() -> list[CheckResult]:
    co = catalogue.exp_rough()
    meshes = [2 ** p for p in range(4, 11)]

    def smooth():
        errs = []
        for n in meshes:
            grid = TimeGrid(0.0, 1.0, n)
            rp = lift_function(lambda t: t, grid)
            traj = integrate_paths(co, [0.0], grid, 0, rp.increments, rp.level2_step,
                                   np.zeros((1, n, 0)), [1.0])
            errs.append(abs(traj.terminal[0, 0] - math.e))
        return errs

    def brownian():
        n_paths, finest = 200, meshes[-1]
        W = np.stack([brownian_increments([33, p], 1, finest, 1.0 / finest)
                      for p in range(n_paths)])
        exact = np.exp(W.sum(axis=1)[:, 0] - 0.5)
        errs = []
        for n in meshes:
            grid = TimeGrid(0.0, 1.0, n)
            _, dW, XX = brownian_lift_steps(W, n, grid.h, "ito")
            traj = integrate_paths(co, [0.0], grid, 0, dW, XX, np.zeros((n_paths, n, 0)), [1.0])
            errs.append(float(np.mean(np.abs(traj.terminal[:, 0] - exact))))
        return errs

    (e1, s1), (e2, s2) = _timed(smooth), _timed(brownian)
    o1, o2 = fitted_order(meshes, e1), fitted_order(meshes, e2)
    total = s1 + s2
    return [CheckResult(3, "rde-order-smooth", o1 >= 0.9 and total < 60, f"order={o1:.3f}", s1),
            CheckResult(3, "rde-order-ito", o2 >= 0.4 and total < 60, f"order={o2:.3f}", s2)]


# -- 4 -----------------------------------------------------------------------

def criterion_4() -> list[CheckResult]:
    out = []
    total = 0.0
    for name in ("f0", "ln2", "ln1.5", "nilpotent"):
        def run():
            p = catalogue.linear_target(name)
            vg = dpp_solve(p.problem, p.rough_path, p.lattice, 1)
            return p, float(vg.value(0, np.array(p.y0)))
        (p, v), sec = _timed(run)
        total += sec
        gap = abs(v - p.closed_form)
        axes = p.lattice.shape
        assert all(a == 201 for a in axes)
        out.append(CheckResult(4, f"linear-target-{name}", gap <= 5e-3 and total < 120,
                               f"dpp={v:.6f} closed={p.closed_form:.6f} gap={gap:.2e} "
                               f"n={p.rough_path.n_steps}", sec))
    return out


# -- 5 -----------------------------------------------------------------------

def criterion_5() -> list[CheckResult]:
    def run():
        p = catalogue.hjb_quadratic(n_steps=40, nodes=101, n_controls=21)
        vg = dpp_solve(p.problem, p.rough_path, p.lattice, 5)
        return p, float(vg.value(0, np.array(p.y0)))

    (p, v), sec = _timed(run)
    eps = p.spec.epsilon
    exact = 0.0 + 0.0 + 1.0 / (12 * eps)
    gap = abs(v - exact)
    rng = np.random.default_rng(505)
    t, y, z = rng.uniform(0, 1, 20), rng.uniform(-3, 3, 20), rng.uniform(-2, 2, 20)
    res = float(np.max(np.abs(hjb_pde_residual(eps, 1.0, 1.0, t, y, z))))
    return [CheckResult(5, "hjb-quadratic-dpp", gap <= 5e-2 and sec < 300,
                        f"dpp={v:.6f} exact={exact:.6f} gap={gap:.2e}", sec),
            CheckResult(5, "hjb-pde-residual", res < 1e-8, f"max_residual={res:.2e}")]


# -- 6 -----------------------------------------------------------------------

def criterion_6() -> list[CheckResult]:
    p = catalogue.linear_target("ln1.5")
    (d1, sec) = _timed(lambda: dpp_consistency(p.problem, p.rough_path, p.lattice, 1,
                                                p.rough_path.n_steps // 2))
    z = catalogue.smooth_problem(zero_cost=True)
    d0 = dpp_consistency(z.problem, z.rough_path, z.lattice, z.quad_nodes, 7)
    return [CheckResult(6, "dpp-composition-linear-target", d1 <= 1e-2, f"defect={d1:.2e}", sec),
            CheckResult(6, "dpp-composition-zero-cost", d0 == 0.0, f"defect={d0:.1e}")]


# -- 7 -----------------------------------------------------------------------

def criterion_7() -> list[CheckResult]:
    def run():
        p = catalogue.smooth_problem()
        reps = []
        for eps in (0.2, 0.1, 0.05):
            rp2 = catalogue.perturbed("sine", p.rough_path.grid, eps)
            reps.append(value_continuity_probe(p.problem, p.rough_path, rp2, p.lattice,
                                               p.quad_nodes))
        return reps

    reps, sec = _timed(run)
    ratios = [r.ratio for r in reps]
    sups = [r.sup_dV for r in reps]
    within = min(ratios) > 0 and max(ratios) / min(ratios) <= 3.0
    mono = all(a > b for a, b in zip(sups, sups[1:]))
    return [CheckResult(7, "value-continuity", within and mono,
                        "ratios=" + ",".join(f"{r:.4f}" for r in ratios)
                        + " sup_dV=" + ",".join(f"{s:.2e}" for s in sups), sec)]


# -- 8 -----------------------------------------------------------------------

def criterion_8() -> list[CheckResult]:
    meshes = [16, 32, 64, 128]

    def run(name):
        return pathwise_consistency(catalogue.coefficients(name), [0.0], 0, meshes, 200, [1.0])

    res, sec = _timed(lambda: run("exp-rough"))
    gaps = [r.mean_gap for r in res]
    factors = [a / b for a, b in zip(gaps, gaps[1:])]
    zero = run("generic-smooth-no-rough")
    zgaps = [r.mean_gap for r in zero]
    return [CheckResult(8, "pathwise-decay", min(factors) >= 1.3,
                        "factors=" + ",".join(f"{f:.3f}" for f in factors), sec),
            CheckResult(8, "pathwise-zero-when-f0", all(g == 0.0 for g in zgaps),
                        "gaps=" + ",".join(f"{g:.1e}" for g in zgaps))]


# -- 9 -----------------------------------------------------------------------

#: small but representative configs for every subcommand
CLI_RUNS = [
    ["lift", "--set", "path=square", "--set", "n_steps=16"],
    ["brownian", "--set", "seed=5", "--set", "dim=2", "--set", "n_steps=16"],
    ["integrate", "--set", "n_steps=32"],
    ["solve", "--set", "coefficients=generic-smooth", "--set", "path=brownian-ito",
     "--set", "n_steps=16", "--set", "seed=3"],
    ["dpp", "--set", "problem=smooth", "--set", "n_steps=8", "--set", "nodes=21"],
    ["example", "linear-target", "--set", "preset=f0", "--set", "n_steps=10"],
    ["example", "hjb-quadratic", "--set", "n_steps=4", "--set", "nodes=21"],
    ["continuity-probe", "--set", "n_steps=6", "--set", "nodes=21"],
    ["pathwise-check", "--set", "n_paths=20", "--set", "n0=4"],
    ["randomize", "--set", "n_outer=10", "--set", "n_steps=8"],
    ["accept", "--set", "only=[2]"],
]


def _csv_files(d):
    return sorted(f for f in os.listdir(d) if f.endswith(".csv"))


def criterion_9() -> list[CheckResult]:
    import contextlib
    import io
    from .cli import main

    def run():
        bad = []
        with tempfile.TemporaryDirectory() as tmp:
            for i, argv in enumerate(CLI_RUNS):
                dirs = [os.path.join(tmp, f"{i}_{r}") for r in ("a", "b", "c")]
                with contextlib.redirect_stdout(io.StringIO()):
                    codes = [main(argv + ["--out", dirs[0]]), main(argv + ["--out", dirs[1]]),
                             main(["replay", os.path.join(dirs[0], "manifest.json"),
                                   "--out", dirs[2]])]
                if any(c != 0 for c in codes):
                    bad.append(f"{argv[0]}:exit{codes}")
                    continue
                files = _csv_files(dirs[0])
                if not files:
                    bad.append(f"{argv[0]}:no-csv")
                for f in files:
                    for other in dirs[1:]:
                        if not filecmp.cmp(os.path.join(dirs[0], f), os.path.join(other, f),
                                           shallow=False):
                            bad.append(f"{argv[0]}:{f}")
        return bad

    bad, sec = _timed(run)
    return [CheckResult(9, "cli-reproducibility", not bad,
                        f"{len(CLI_RUNS)} subcommands" + (f" mismatches={bad}" if bad else ""),
                        sec)]


# -- 10 ----------------------------------------------------------------------

def criterion_10() -> list[CheckResult]:
    def presets():
        yield catalogue.smooth_problem()
        yield catalogue.linear_target("ln1.5", n_steps=40)
        yield catalogue.linear_target("f0", n_steps=20)

    worst = -np.inf
    for p in presets():
        full = dpp_solve(p.problem, p.rough_path, p.lattice, p.quad_nodes)
        sub = replace(p.problem, controls=p.problem.controls[::2])
        small = dpp_solve(sub, p.rough_path, p.lattice, p.quad_nodes)
        worst = max(worst, float(np.max(full.values - small.values)))
    s = catalogue.smooth_problem()
    pmax = replace(s.problem, sense="max")
    neg = replace(s.problem, sense="min", g=lambda y: -s.problem.g(y),
                  ell=lambda t, y, a: -s.problem.ell(t, y, a))
    vmax = dpp_solve(pmax, s.rough_path, s.lattice, s.quad_nodes).values
    vneg = dpp_solve(neg, s.rough_path, s.lattice, s.quad_nodes).values
    dual = float(np.max(np.abs(vmax + vneg)))
    return [CheckResult(10, "control-set-monotonicity", worst <= 0.0,
                        f"max(V_full - V_subset)={worst:.2e}"),
            CheckResult(10, "sense-duality", dual == 0.0, f"max|Vmax + Vmin(-g,-l)|={dual:.1e}")]


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


def run_all(only=None, echo: bool = False) -> list[CheckResult]:
    results = []
    for i, fn in CRITERIA.items():
        if only and i not in only:
            continue
        for r in fn():
            results.append(r)
            if echo:
                print(f"[{'PASS' if r.passed else 'FAIL'}] criterion {r.criterion:>2} "
                      f"{r.name}: {r.detail}", flush=True)
    return results
