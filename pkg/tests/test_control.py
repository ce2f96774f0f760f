from dataclasses import replace

import numpy as np
import pytest

from roughctl import catalogue
from roughctl.control import (ControlProblem, StateLattice, augment_running_cost, control_box,
                              dpp_consistency, dpp_solve, gauss_hermite, policy_value_mc,
                              value_continuity_probe)
from roughctl.roughpath import GridError, TimeGrid, lift_function
from roughctl.rsde import CoefficientSet


@pytest.fixture(scope="module")
def smooth():
    return catalogue.smooth_problem()


@pytest.fixture(scope="module")
def smooth_values(smooth):
    return dpp_solve(smooth.problem, smooth.rough_path, smooth.lattice, smooth.quad_nodes)


def test_gauss_hermite_moments():
    x, w = gauss_hermite(5, 1)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert w @ x[:, 0] ** 2 == pytest.approx(1.0, abs=1e-13)
    assert w @ x[:, 0] ** 4 == pytest.approx(3.0, abs=1e-12)
    x2, w2 = gauss_hermite(3, 2)
    assert x2.shape == (9, 2)
    assert w2 @ (x2[:, 0] ** 2 * x2[:, 1] ** 2) == pytest.approx(1.0, abs=1e-13)


def test_lattice_interpolation():
    lat = StateLattice([(-1.0, 1.0, 5), (0.0, 2.0, 3)])
    pts = lat.points()
    vals = 2 * pts[:, 0] - pts[:, 1] + 0.5
    q = np.array([[0.3, 1.7], [-0.9, 0.1], [5.0, 1.0]])
    out, n_out = lat.interpolate(vals, q)
    np.testing.assert_allclose(out[:2], 2 * q[:2, 0] - q[:2, 1] + 0.5, atol=1e-14)
    assert out[2] == pytest.approx(2 * 1.0 - 1.0 + 0.5)
    assert n_out == 1
    assert lat.nearest(np.array([[0.45, 1.2]]))[0] == 3 * 3 + 1
    with pytest.raises(ValueError):
        StateLattice([(1.0, 0.0, 5)])
    with pytest.raises(ValueError):
        StateLattice([(0.0, 1.0, 1)])


def test_zero_cost_gives_zero_value():
    p = catalogue.smooth_problem(zero_cost=True)
    vg = dpp_solve(p.problem, p.rough_path, p.lattice, p.quad_nodes)
    assert np.all(vg.values == 0.0)


def test_terminal_slice_and_bounds(smooth, smooth_values):
    pts = smooth.lattice.points()
    np.testing.assert_array_equal(smooth_values.values[-1], smooth.problem.g(pts))
    assert smooth_values.meta["bounds_ok"]
    lo, hi = smooth_values.meta["value_bounds"]
    assert lo <= smooth_values.values.min() and smooth_values.values.max() <= hi


def test_translation_invariance(smooth, smooth_values):
    shifted = replace(smooth.problem, g=lambda y: smooth.problem.g(y) + 2.5)
    vg = dpp_solve(shifted, smooth.rough_path, smooth.lattice, smooth.quad_nodes)
    np.testing.assert_allclose(vg.values - smooth_values.values, 2.5, rtol=0, atol=1e-12)


def test_sense_duality_exact(smooth):
    p = smooth.problem
    vmax = dpp_solve(replace(p, sense="max"), smooth.rough_path, smooth.lattice, 5)
    neg = replace(p, g=lambda y: -p.g(y), ell=lambda t, y, a: -p.ell(t, y, a))
    vmin = dpp_solve(neg, smooth.rough_path, smooth.lattice, 5)
    np.testing.assert_array_equal(vmax.values, -vmin.values)
    np.testing.assert_array_equal(vmax.policy, vmin.policy)


def test_control_set_monotonicity(smooth, smooth_values):
    small = replace(smooth.problem, controls=smooth.problem.controls[[0, 2, 4]])
    vs = dpp_solve(small, smooth.rough_path, smooth.lattice, smooth.quad_nodes)
    assert np.all(smooth_values.values <= vs.values)


@pytest.mark.parametrize("lam", [2.0, 0.5])
def test_argmin_stability_under_cost_scaling(smooth, smooth_values, lam):
    # powers of two scale every intermediate exactly, so near-ties cannot flip
    p = smooth.problem
    scaled = replace(p, g=lambda y: lam * p.g(y), ell=lambda t, y, a: lam * p.ell(t, y, a))
    vg = dpp_solve(scaled, smooth.rough_path, smooth.lattice, smooth.quad_nodes)
    np.testing.assert_array_equal(vg.policy, smooth_values.policy)
    np.testing.assert_array_equal(vg.values, lam * smooth_values.values)


def test_singleton_control_matches_monte_carlo(smooth):
    p = replace(smooth.problem, controls=np.array([[0.3]]))
    vg = dpp_solve(p, smooth.rough_path, smooth.lattice, smooth.quad_nodes)
    v = float(vg.value(0, np.array([0.0])))
    mc = policy_value_mc(p, [0.3], smooth.rough_path, [0.0], 0.0, 4000, seed=12)
    assert abs(v - mc.estimate) <= 4 * mc.stderr + 1e-2


def test_mc_constant_cost_and_deterministic():
    p = catalogue.smooth_problem(zero_cost=True)
    const = replace(p.problem, g=lambda y: np.full(np.shape(y)[:-1], 1.25))
    est = policy_value_mc(const, [0.0], p.rough_path, [0.0], 0.0, 50, seed=1)
    assert (est.estimate, est.stderr) == (1.25, 0.0)
    lt = catalogue.linear_target("ln1.5", n_steps=20)
    a = policy_value_mc(lt.problem, [[0.5]], lt.rough_path, [0.0], 0.0, 3, seed=1)
    b = policy_value_mc(lt.problem, [[0.5]], lt.rough_path, [0.0], 0.0, 17, seed=9)
    assert a.stderr == 0.0 and a.estimate == b.estimate


def test_linear_target_policy_against_constant_controls():
    lt = catalogue.linear_target("ln1.5", n_steps=40)
    vg = dpp_solve(lt.problem, lt.rough_path, lt.lattice, 1)
    v0 = float(vg.value(0, np.zeros(1)))
    pol = policy_value_mc(lt.problem, vg, lt.rough_path, [0.0], 0.0, 2, seed=0)
    assert pol.estimate >= v0 - 1e-2
    for a in lt.problem.controls:
        const = policy_value_mc(lt.problem, a[None], lt.rough_path, [0.0], 0.0, 2, seed=0)
        assert pol.estimate <= const.estimate + const.stderr + 1e-12


def test_dpp_consistency_cases(smooth):
    z = catalogue.smooth_problem(zero_cost=True)
    assert dpp_consistency(z.problem, z.rough_path, z.lattice, 5, 9) == 0.0
    co = catalogue.generic_smooth()
    det = CoefficientSet(co.d_y, co.d_x, 0, co.d_a, co.b, None, co.f, co.Df)
    single = replace(smooth.problem, coeffs=det, controls=np.array([[0.0]]))
    assert dpp_consistency(single, smooth.rough_path, smooth.lattice, 1, 10) <= 1e-2
    lt = catalogue.linear_target("ln1.5")
    assert dpp_consistency(lt.problem, lt.rough_path, lt.lattice, 1, 80) <= 1e-2
    with pytest.raises(ValueError):
        dpp_consistency(z.problem, z.rough_path, z.lattice, 5, 0)


def test_running_cost_augmentation(smooth):
    lat = StateLattice([(-3.0, 3.0, 101), (-0.5, 0.5, 21)])
    aug = augment_running_cost(smooth.problem)
    va = dpp_solve(aug, smooth.rough_path, lat, smooth.quad_nodes)
    vd = dpp_solve(smooth.problem, smooth.rough_path, smooth.lattice, smooth.quad_nodes)
    ys = np.linspace(-1.0, 1.0, 9)
    direct = vd.value(0, ys[:, None])
    augmented = va.value(0, np.stack([ys, np.zeros_like(ys)], axis=1))
    np.testing.assert_allclose(augmented, direct, atol=1e-2)


def test_continuity_probe_identity(smooth):
    rep = value_continuity_probe(smooth.problem, smooth.rough_path, smooth.rough_path,
                                 smooth.lattice)
    assert (rep.rho, rep.sup_dV, rep.ratio) == (0.0, 0.0, 0.0)


def test_input_validation(smooth):
    with pytest.raises(GridError):
        dpp_solve(smooth.problem, lift_function(lambda t: t, TimeGrid(0.0, 1.0, 7)),
                  smooth.lattice)
    with pytest.raises(GridError):
        dpp_solve(smooth.problem, smooth.rough_path, StateLattice([(0, 1, 3), (0, 1, 3)]))
    co = CoefficientSet(4, 1, 0, 1, b=lambda t, y, a: np.zeros_like(y))
    big = ControlProblem(co, lambda y: y[..., 0], control_box(-1, 1, 3), smooth.problem.horizon)
    with pytest.raises(ValueError):
        dpp_solve(big, smooth.rough_path, StateLattice([(0, 1, 2)] * 4))
    with pytest.raises(ValueError):
        ControlProblem(co, lambda y: y, np.zeros((0, 1)), smooth.problem.horizon)
    with pytest.raises(ValueError):
        ControlProblem(co, lambda y: y, control_box(-1, 1, 3), smooth.problem.horizon,
                       sense="sup")
