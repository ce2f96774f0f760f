from dataclasses import replace

import numpy as np
import pytest

from roughctl import catalogue
from roughctl.control import dpp_solve
from roughctl.examples import LinearTargetSpec
from roughctl.randomize import (RandomizationSpec, closed_form_inner, dpp_inner,
                                pathwise_consistency, sample_randomized_values)
from roughctl.roughpath import TimeGrid
from roughctl.rsde import CoefficientSet

GRID = TimeGrid(0.0, 0.5, 32)


def scalar_spec(F):
    return LinearTargetSpec([[[F]]], [1.0], GRID)


def test_single_sample_deterministic():
    spec = RandomizationSpec(4, 1, GRID, refinement=1)
    inner = closed_form_inner(scalar_spec(1.0))
    a, b = sample_randomized_values(spec, inner), sample_randomized_values(spec, inner)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.stderr == 0.0


def test_zero_flow_is_path_independent():
    spec = RandomizationSpec(1, 20, GRID, refinement=1)
    res = sample_randomized_values(spec, closed_form_inner(scalar_spec(0.0)))
    np.testing.assert_allclose(res.samples, 0.5, atol=1e-15)


def test_mean_stable_across_disjoint_seeds():
    inner = closed_form_inner(scalar_spec(1.0))
    a = sample_randomized_values(RandomizationSpec(100, 500, GRID, refinement=1), inner)
    b = sample_randomized_values(RandomizationSpec(200, 500, GRID, refinement=1), inner)
    assert abs(a.mean - b.mean) <= 3 * np.hypot(a.stderr, b.stderr)
    assert a.min >= 0.0 and a.max <= 1.0 and b.min >= 0.0 and b.max <= 1.0


def test_outer_samples_exchangeable():
    spec = RandomizationSpec(9, 6, GRID, refinement=1)
    inner = closed_form_inner(scalar_spec(1.0))
    base = sample_randomized_values(spec, inner).samples
    order = [4, 1, 5, 0, 3, 2]
    perm = sample_randomized_values(spec, inner, indices=order).samples
    np.testing.assert_array_equal(perm, base[order])


def test_no_rough_driver_makes_randomization_inert():
    p = catalogue.smooth_problem(n_steps=10, nodes=41)
    co = p.problem.coeffs
    flat = replace(p.problem, coeffs=CoefficientSet(co.d_y, co.d_x, co.d_b, co.d_a, co.b,
                                                    co.sigma))
    direct = float(dpp_solve(flat, p.rough_path, p.lattice, 5).value(0, np.zeros(1)))
    spec = RandomizationSpec(3, 4, p.rough_path.grid, mode="strato", refinement=1)
    res = sample_randomized_values(spec, dpp_inner(flat, p.lattice, p.y0))
    np.testing.assert_array_equal(res.samples, direct)


def test_spec_validation():
    with pytest.raises(ValueError):
        RandomizationSpec(0, 0, GRID)
    with pytest.raises(ValueError):
        RandomizationSpec(0, 1, GRID, mode="geometric")


def test_pathwise_zero_without_rough_driver():
    co = catalogue.coefficients("generic-smooth-no-rough")
    res = pathwise_consistency(co, [0.2], 3, [8, 16, 32], 30, [0.5])
    assert [r.mean_gap for r in res] == [0.0, 0.0, 0.0]


def test_pathwise_exponential_decay_and_limit():
    res = pathwise_consistency(catalogue.exp_rough(), [0.0], 0, [16, 32, 64, 128], 200, [1.0])
    gaps = [r.mean_gap for r in res]
    assert all(a / b >= 1.3 for a, b in zip(gaps, gaps[1:]))
    exact = np.exp(res[-1].W_T[:, 0] - 0.5)
    err = [np.mean(np.abs(r.rough_terminal[:, 0] - exact)) for r in res]
    assert all(a > b for a, b in zip(err, err[1:]))
    # all meshes see the same Brownian endpoint
    for r in res:
        np.testing.assert_allclose(r.W_T, res[0].W_T, atol=1e-13)


def test_pathwise_generic_monotone():
    res = pathwise_consistency(catalogue.generic_smooth(), [0.3], 0, [16, 32, 64, 128], 200,
                               [0.1])
    gaps = [r.mean_gap for r in res]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_pathwise_mesh_validation():
    with pytest.raises(ValueError):
        pathwise_consistency(catalogue.exp_rough(), [0.0], 0, [16, 24], 5, [1.0])
