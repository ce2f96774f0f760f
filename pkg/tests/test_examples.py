import math

import numpy as np
import pytest

from roughctl import catalogue
from roughctl.control import dpp_solve
from roughctl.examples import (HjbQuadraticSpec, LinearTargetSpec, direction_controls,
                               hjb_pde_residual, hjb_quadratic_problem, hjb_quadratic_value,
                               linear_target_value)
from roughctl.roughpath import GridError, TimeGrid, brownian_rough_path, lift_function


def identity_path(T, n):
    return lift_function(lambda t: t, TimeGrid(0.0, T, n))


def test_zero_flow_value():
    rp = identity_path(0.5, 20)
    res = linear_target_value(LinearTargetSpec([[[0.0]]], [1.0], rp.grid), rp)
    assert res.M_T == pytest.approx(0.5, abs=1e-15)
    assert res.value == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_array_equal(res.theta_norm, 1.0)
    np.testing.assert_array_equal(res.control, 1.0)
    rp2 = identity_path(2.0, 20)
    v2 = linear_target_value(LinearTargetSpec([[[0.0]]], [0.8], rp2.grid), rp2)
    assert v2.value == 0.0
    np.testing.assert_allclose(v2.control, 0.8 / 0.8 / v2.M_T, atol=1e-15)


@pytest.mark.parametrize("T,expected", [(math.log(2.0), 0.0), (math.log(1.5), 0.5)])
def test_scalar_flow_oracle(T, expected):
    rp = identity_path(T, 400)
    res = linear_target_value(LinearTargetSpec([[[1.0]]], [1.0], rp.grid), rp)
    assert res.M_T == pytest.approx(math.exp(T) - 1.0, abs=1e-5)
    assert res.value == pytest.approx(expected, abs=1e-5)


def test_degenerate_direction_flagged():
    rp = identity_path(1.0, 10)
    res = linear_target_value(LinearTargetSpec([[[0.0, 0.0], [0.0, 0.0]]], [0.0, 0.0], rp.grid), rp)
    assert res.degenerate.size == 10
    assert np.all(res.control == 0.0)
    assert res.value == 1.0


def test_rotation_invariance():
    rng = np.random.default_rng(21)
    rp = brownian_rough_path(3, 2, TimeGrid(0.0, 0.8, 40), refinement=4, mode="strato")
    F = rng.standard_normal((2, 2, 2)) * 0.5
    v = rng.standard_normal(2)
    base = linear_target_value(LinearTargetSpec(F, v, rp.grid), rp)
    for _ in range(5):
        Q, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        rot = LinearTargetSpec(np.einsum("ab,ibc,dc->iad", Q, F, Q), Q @ v, rp.grid)
        res = linear_target_value(rot, rp)
        assert res.value == pytest.approx(base.value, abs=1e-8)
        np.testing.assert_allclose(res.theta_norm, base.theta_norm, atol=1e-8)


def test_value_in_unit_interval():
    rng = np.random.default_rng(2)
    for seed in range(10):
        rp = brownian_rough_path(seed, 1, TimeGrid(0.0, 1.0, 30))
        res = linear_target_value(LinearTargetSpec(rng.standard_normal((1, 1, 1)), [1.0],
                                                   rp.grid), rp)
        assert 0.0 <= res.value <= 1.0
        if res.M_T >= 1:
            assert res.value == 0.0


def test_grid_mismatch():
    rp = identity_path(1.0, 10)
    with pytest.raises(GridError):
        linear_target_value(LinearTargetSpec([[[1.0]]], [1.0], TimeGrid(0.0, 1.0, 11)), rp)


def test_direction_controls():
    assert direction_controls(1, 21).shape == (21, 1)
    c2 = direction_controls(2, 8)
    assert c2.shape == (9, 2)
    np.testing.assert_allclose(np.linalg.norm(c2[:-1], axis=1), 1.0)
    with pytest.raises(ValueError):
        direction_controls(3, 4)


def hjb_spec(X, epsilon=0.5):
    eta = float(np.max(np.abs(X.values[-1] - X.values))) / (2 * epsilon) + 1.0
    return HjbQuadraticSpec(epsilon, 1.0, X.grid, eta)


def test_hjb_closed_form_identity_path():
    X = identity_path(1.0, 2000)
    for eps in (0.5, 0.25):
        v = hjb_quadratic_value(hjb_spec(X, eps), X, 0.0, 0.3, -0.7)
        assert v == pytest.approx(0.3 - 0.7 + 1.0 / (12 * eps), abs=1e-6)


def test_hjb_constant_path_and_affinity():
    X = lift_function(lambda t: 0.4, TimeGrid(0.0, 1.0, 10))
    spec = hjb_spec(X)
    assert hjb_quadratic_value(spec, X, 0.0, 1.7, 3.0) == 1.7
    Y = lift_function(lambda t: math.sin(4 * t), TimeGrid(0.0, 1.0, 50))
    sp = hjb_spec(Y)
    s = 0.2
    base = hjb_quadratic_value(sp, Y, s, 0.0, 0.0)
    gap = Y.values[-1, 0] - Y.values[10, 0]
    for y, z in [(1.0, 0.0), (0.0, 1.0), (2.5, -3.0)]:
        assert hjb_quadratic_value(sp, Y, s, y, z) == base + y + gap * z


def test_hjb_residual_and_printed_variant():
    rng = np.random.default_rng(8)
    t, y, z = rng.uniform(0, 1, 20), rng.uniform(-3, 3, 20), rng.uniform(-2, 2, 20)
    assert np.max(np.abs(hjb_pde_residual(0.5, 1.0, 1.0, t, y, z))) < 1e-8
    # the outer-variable integrand does not solve the equation
    assert np.max(np.abs(hjb_pde_residual(0.5, 1.0, 1.0, t, y, z, printed=True))) > 1e-2


def test_hjb_control_box_checks():
    X = identity_path(1.0, 10)
    with pytest.raises(ValueError):
        HjbQuadraticSpec(0.5, 1.0, X.grid, 0.5).check_box(X.values)
    with pytest.raises(ValueError):
        hjb_quadratic_problem(hjb_spec(X), n_controls=20)
    p = hjb_quadratic_problem(hjb_spec(X), n_controls=21)
    assert p.sense == "max" and np.any(p.controls[:, 0] == 0.0)


def test_linear_target_dpp_f0_exact():
    lt = catalogue.linear_target("f0")
    vg = dpp_solve(lt.problem, lt.rough_path, lt.lattice, 1)
    assert float(vg.value(0, np.zeros(1))) == pytest.approx(0.5, abs=1e-12)


def test_linear_target_dpp_ln15():
    lt = catalogue.linear_target("ln1.5")
    vg = dpp_solve(lt.problem, lt.rough_path, lt.lattice, 1)
    assert float(vg.value(0, np.zeros(1))) == pytest.approx(lt.closed_form, abs=5e-3)


def test_hjb_dpp_coarse():
    p = catalogue.hjb_quadratic(n_steps=20, nodes=61)
    vg = dpp_solve(p.problem, p.rough_path, p.lattice, 5)
    assert float(vg.value(0, np.zeros(2))) == pytest.approx(1 / 6, abs=5e-2)
