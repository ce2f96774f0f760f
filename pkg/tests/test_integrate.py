import math

import numpy as np
import pytest

from roughctl.integrate import ControlledPath, controlled_seminorms, rough_integral
from roughctl.roughpath import (GridError, RoughPath, TimeGrid, brownian_rough_path, level2,
                                lift_function, lift_piecewise_linear)


def sin_integrand(rp):
    x = rp.values
    return ControlledPath(rp.grid, np.sin(x), np.cos(x)[:, :, None])


def identity_integrand(rp):
    d, n = rp.dim, rp.n_steps
    return ControlledPath(rp.grid, rp.values - rp.values[0],
                          np.broadcast_to(np.eye(d), (n + 1, d, d)))


def test_constant_integrand():
    rp = lift_function(lambda t: (t, t * t), TimeGrid(0.0, 1.0, 16))
    cp = ControlledPath(rp.grid, np.full((17, 1), 2.5), np.zeros((17, 1, 2)))
    out = rough_integral(cp, rp)
    np.testing.assert_allclose(out[:, 0, :], 2.5 * (rp.values - rp.values[0]), atol=1e-14)


@pytest.mark.parametrize("n", [8, 64, 512])
def test_exact_on_identity_integrand(n):
    rp = brownian_rough_path(n, 2, TimeGrid(0.0, 1.0, n), refinement=4)
    out = rough_integral(identity_integrand(rp), rp)
    assert np.all(out[0] == 0.0)
    np.testing.assert_allclose(out[-1], level2(rp, 0, n), atol=1e-12)


def test_sine_integral_converges():
    fine = lift_function(lambda t: t, TimeGrid(0.0, 1.0, 2 ** 14))
    oracle = rough_integral(sin_integrand(fine), fine)[-1, 0, 0]
    assert oracle == pytest.approx(1 - math.cos(1.0), abs=1e-6)
    errs = []
    for n in (4, 8, 16, 32, 64):
        rp = lift_function(lambda t: t, TimeGrid(0.0, 1.0, n))
        errs.append(abs(rough_integral(sin_integrand(rp), rp)[-1, 0, 0] - oracle))
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_additivity_over_restart():
    rp = brownian_rough_path(2, 2, TimeGrid(0.0, 1.0, 40), refinement=4, mode="strato")
    cp = ControlledPath(rp.grid, np.sin(rp.values),
                        np.cos(rp.values)[:, :, None] * np.eye(2)[None])
    full = rough_integral(cp, rp)
    j = 17
    tail = rough_integral(cp.restrict(j, 40), rp.restrict(j, 40))
    np.testing.assert_allclose(full[j] + tail, full[j:], rtol=0, atol=1e-14)


def test_linearity():
    rp = brownian_rough_path(3, 2, TimeGrid(0.0, 1.0, 30), refinement=4)
    a = ControlledPath(rp.grid, np.sin(rp.values), np.cos(rp.values)[:, :, None] * np.eye(2))
    b = identity_integrand(rp)
    lhs = rough_integral(a.scaled(2.0) + b.scaled(-0.5), rp)
    rhs = 2.0 * rough_integral(a, rp) - 0.5 * rough_integral(b, rp)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_zero_second_level_is_left_riemann_sum():
    rng = np.random.default_rng(1)
    grid = TimeGrid(0.0, 1.0, 20)
    x = rng.standard_normal((21, 2))
    rp = RoughPath(grid, x, np.zeros((20, 2, 2)))
    z = rng.standard_normal((21, 3))
    cp = ControlledPath(grid, z, rng.standard_normal((21, 3, 2)))
    out = rough_integral(cp, rp)
    ref = np.zeros((21, 3, 2))
    for k in range(20):
        ref[k + 1] = ref[k] + np.outer(z[k], x[k + 1] - x[k])
    np.testing.assert_array_equal(out, ref)


def test_grid_mismatch_rejected():
    rp = lift_function(lambda t: t, TimeGrid(0.0, 1.0, 8))
    other = lift_function(lambda t: t, TimeGrid(0.0, 1.0, 4))
    with pytest.raises(GridError):
        rough_integral(sin_integrand(other), rp)
    with pytest.raises(GridError):
        ControlledPath(rp.grid, np.zeros(5), np.zeros(9))


def test_seminorms_trivial_cases():
    rp = brownian_rough_path(0, 1, TimeGrid(0.0, 1.0, 32))
    zero = ControlledPath(rp.grid, np.zeros(33), np.zeros(33))
    rep = controlled_seminorms(zero, rp, 0.4, 0.4)
    assert (rep.dz, rep.sup_zprime, rep.dzprime, rep.remainder) == (0.0, 0.0, 0.0, 0.0)
    assert rep.empirical
    assert controlled_seminorms(identity_integrand(rp), rp, 0.4, 0.4).remainder == 0.0
    with pytest.raises(ValueError):
        controlled_seminorms(zero, rp, 1.5, 0.4)


def test_seminorms_stable_under_doubling():
    reps = []
    for n in (128, 256):
        rp = lift_function(lambda t: math.sin(3 * t), TimeGrid(0.0, 1.0, n))
        reps.append(controlled_seminorms(sin_integrand(rp), rp, 0.45, 0.45))
    for field in ("dz", "sup_zprime", "dzprime", "remainder"):
        a, b = getattr(reps[0], field), getattr(reps[1], field)
        assert np.isfinite(a) and np.isfinite(b)
        assert 0.5 <= b / a <= 2.0
