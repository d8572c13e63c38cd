import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphereforge import rng as rngmod
from sphereforge.design_uniform import (
    PerturbConfig,
    ScaleWarning,
    concentration_check,
    default_delta,
    design_residual,
    increment_check,
    pairwise_mean,
    perturb_map,
    random_start,
    solve_uniform_design,
)
from sphereforge.design_weighted import evenly_spaced_circle
from sphereforge.errors import DimensionError, NonUnitError
from sphereforge.polycore import (
    HomogeneousPoly,
    dim_homogeneous,
    gradient,
    homogenize,
    orthonormal_basis,
    random_unit_poly,
    tangential_gradient,
)


class TestPerturbMap:
    def test_zero_poly_fixes_points(self):
        y = random_start(20, 3, 0)
        np.testing.assert_array_equal(perturb_map(y, HomogeneousPoly.zero(3, 3), 0.1), y)

    def test_hand_example(self):
        z = perturb_map([[1.0, 0.0]], HomogeneousPoly.monomial((0, 1)), 0.1)
        np.testing.assert_allclose(z[0], np.array([1.0, 0.1]) / math.sqrt(1.01), rtol=1e-15)
        np.testing.assert_allclose(z[0], [0.995037, 0.099504], atol=5e-7)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from([(2, 1), (3, 3), (4, 2)]))
    def test_unit_output_and_displacement(self, seed, td):
        t, d = td
        g = rngmod.stream(seed, "pm")
        y = rngmod.uniform_sphere(g, 30, d)
        p = random_unit_poly(t, d, g)
        delta = default_delta(t, d) * 50
        z = perturb_map(y, p, delta)
        np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-14)
        go = tangential_gradient(p, y)
        assert np.abs(np.sum(go * y, axis=1)).max() <= 1e-12
        disp = np.linalg.norm(z - y, axis=1)
        full = np.linalg.norm(gradient(p, y), axis=1)
        assert np.all(disp <= 2 * delta * full + 1e-14)

    @pytest.mark.parametrize("t,d", [(1, 2), (3, 3), (5, 2)])
    def test_continuity_slope(self, t, d):
        g = rngmod.stream(5, "cont", t, d)
        y = rngmod.uniform_sphere(g, 200, d)
        delta = default_delta(t, d)
        slope = 10 * delta * math.sqrt(t * (d + 2 * t - 2) * dim_homogeneous(2 * (t - 1), d))
        for _ in range(10):
            p = random_unit_poly(t, d, g)
            q = random_unit_poly(t, d, g)
            p2 = p + q * 1e-6
            gap = np.linalg.norm(perturb_map(y, p, delta) - perturb_map(y, p2, delta), axis=1).max()
            assert gap <= slope * 1e-6

    def test_errors(self):
        with pytest.raises(NonUnitError):
            perturb_map([[1.0, 0.5]], HomogeneousPoly.monomial((1, 0)), 0.1)
        with pytest.raises(DimensionError):
            perturb_map([[1.0, 0.0, 0.0]], HomogeneousPoly.monomial((1, 0)), 0.1)


class TestDesignResidual:
    def test_antipodal(self):
        for t in (1, 3, 5, 7):
            assert max(design_residual([[0.6, 0.8], [-0.6, -0.8]], t).values()) <= 1e-16

    def test_circle(self):
        pts = evenly_spaced_circle(5).points
        res = design_residual(pts, 3)
        assert sorted(res) == [1, 3]
        assert max(res.values()) <= 1e-15
        assert design_residual(pts, 5)[5] > 1e-2

    def test_even_rejected(self):
        with pytest.raises(ValueError):
            design_residual([[1.0, 0.0]], 2)


class TestIncrement:
    def test_fixed_point(self):
        # x_1^3 at e_1 has no tangential gradient
        p = HomogeneousPoly.monomial((3, 0))
        p = p * (1 / p.norm())
        assert increment_check(p, [1.0, 0.0], default_delta(3, 2)) == (0.0, 0.0)

    def test_bound_and_ceiling(self):
        t, d = 3, 3
        g = rngmod.stream(6, "inc")
        delta = default_delta(t, d)
        for _ in range(20):
            p = random_unit_poly(t, d, g)
            y = rngmod.uniform_sphere(g, 200, d)
            lhs, rhs = increment_check(p, y, delta)
            assert np.all(lhs >= 0.5 * rhs)
            full = np.linalg.norm(gradient(p, y), axis=1)
            assert np.all(lhs <= 2 * delta * full * math.sqrt(dim_homogeneous(t, d)) + 1e-15)

    def test_delta_range(self):
        p = random_unit_poly(3, 3, rngmod.stream(0, "x"))
        with pytest.raises(ValueError):
            increment_check(p, [1.0, 0.0, 0.0], 1.0)
        increment_check(p, [1.0, 0.0, 0.0], 1.0, allow_large_delta=True)
        with pytest.raises(ValueError):
            increment_check(p * 2.0, [1.0, 0.0, 0.0], default_delta(3, 3))


class TestPositivity:
    def test_boundary_polys_raise_mean(self):
        d, t, r = 2, 1, 20_000
        assert r >= dim_homogeneous(2 * t, d) ** 5
        y = random_start(r, d, 7)
        delta = default_delta(t, d)
        g = rngmod.stream(7, "boundary")
        for _ in range(100):
            p = random_unit_poly(t, d, g)
            assert pairwise_mean(p(perturb_map(y, p, delta))) > 0


class TestSolver:
    def test_antipodal_zero_iterations(self):
        y = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        z, rep = solve_uniform_design(y, 1)
        assert rep.converged and rep.iterations == 0
        np.testing.assert_array_equal(z, y)
        # already a design: no system to solve, so the point-count floor is not enforced
        z, rep = solve_uniform_design(y[:2], 1)
        assert rep.converged and rep.iterations == 0 and rep.phase == "none"

    def test_underdetermined(self):
        with pytest.raises(ValueError):
            solve_uniform_design(random_start(5, 3, 0), 3)

    def test_even_t(self):
        with pytest.raises(ValueError):
            solve_uniform_design(random_start(50, 3, 0), 2)

    def test_scale_warning(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            solve_uniform_design(random_start(100, 3, 0), 1)
        assert any(issubclass(w.category, ScaleWarning) for w in caught)

    @pytest.mark.parametrize("seed", range(5))
    def test_converges_with_guarantees(self, seed):
        y = random_start(500, 3, seed)
        z, rep = solve_uniform_design(y, 3, PerturbConfig(tolerance=1e-8))
        assert rep.converged
        assert max(rep.residuals.values()) <= 1e-8
        assert max(design_residual(z, 3).values()) <= 1e-8
        np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-12)
        assert rep.separation_after >= rep.separation_before - 2 * rep.max_displacement
        if rep.phase == "coefficient" and rep.poly_in_unit_ball:
            assert rep.max_displacement <= 2 * rep.delta * rep.max_gradient_norm * (1 + 1e-9)

    def test_homogenization_consistency(self):
        t, d = 5, 3
        z, rep = solve_uniform_design(random_start(400, d, 11), t, PerturbConfig(tolerance=1e-10))
        assert rep.converged
        for s in (1, 3):
            for p in orthonormal_basis(s, d).polys:
                lifted = homogenize(p, t)
                assert abs(pairwise_mean(lifted(z))) <= 1e-9
                np.testing.assert_allclose(lifted(z), p(z), atol=1e-12)

    def test_nonconvergence_is_reported(self):
        y = random_start(60, 3, 3)
        z, rep = solve_uniform_design(y, 3, PerturbConfig(max_iterations=0, gauss_newton=False))
        assert not rep.converged
        assert max(rep.residuals.values()) > PerturbConfig().tolerance

    def test_deterministic(self):
        y = random_start(300, 3, 4)
        z1, r1 = solve_uniform_design(y, 3)
        z2, r2 = solve_uniform_design(y, 3)
        np.testing.assert_array_equal(z1, z2)
        assert r1.to_record() == r2.to_record()

    def test_raised_delta_flagged(self):
        _, rep = solve_uniform_design(random_start(300, 3, 4), 3, PerturbConfig(delta=0.01))
        assert rep.delta_raised
        _, rep = solve_uniform_design(random_start(300, 3, 4), 3)
        assert not rep.delta_raised


class TestConcentration:
    def test_large_r(self):
        assert concentration_check(10**6, 1, 2, 0.1, 3) == 0.0

    def test_vacuous_scale(self):
        n = dim_homogeneous(1, 2)
        assert 0.0 <= concentration_check(int(n / 0.01), 1, 2, 0.1, 50) <= 1.0

    def test_bound_at_scale(self):
        t, d, eta, trials = 1, 3, 0.1, 100
        n = dim_homogeneous(t, d)
        r = int(100 * n / eta**2)
        rate = concentration_check(r, t, d, eta, trials, seed=2)
        p = n / (r * eta**2)
        assert rate <= p + 3 * math.sqrt(p * (1 - p) / trials)

    def test_pairwise_mean_order_free(self):
        a = rngmod.stream(0, "pw").standard_normal((1001, 7))
        np.testing.assert_allclose(pairwise_mean(a), a.mean(axis=0), rtol=1e-13)
