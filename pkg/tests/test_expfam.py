import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from alphamix.divergence import build_grid
from alphamix.errors import ImageError
from alphamix.expfam import (GaussianParams, MomentEstimate, g_objective, gaussian_diag_spec,
                             gaussian_fixed_cov_spec, gaussian_full_spec, gaussian_update,
                             grad_g_canonical, gradient_step_canonical, gradient_step_noncanonical,
                             safe_cholesky, solve_argmax_update)
from alphamix.mixture import MixtureState
from alphamix.sampling import exact_stats


def random_spd(rng, d, lo=0.3):
    A = rng.normal(size=(d, d))
    return A @ A.T / d + lo * np.eye(d)


seeds = st.integers(0, 2 ** 32 - 1)


class TestSpecs:
    @given(seeds, st.integers(1, 4))
    @settings(max_examples=40)
    def test_full_round_trip(self, seed, d):
        rng = np.random.default_rng(seed)
        spec = gaussian_full_spec(d)
        zeta = spec.upsilon(rng.normal(size=d), random_spd(rng, d))
        np.testing.assert_allclose(spec.grad_A_inverse(spec.grad_A(zeta)), zeta, atol=1e-10, rtol=1e-10)

    @given(seeds, st.integers(1, 5))
    @settings(max_examples=40)
    def test_diag_round_trip(self, seed, d):
        rng = np.random.default_rng(seed)
        spec = gaussian_diag_spec(d)
        zeta = spec.upsilon(rng.normal(size=d), rng.uniform(0.2, 3.0, size=d))
        np.testing.assert_allclose(spec.grad_A_inverse(spec.grad_A(zeta)), zeta, atol=1e-10, rtol=1e-10)

    @given(seeds, st.integers(1, 4))
    @settings(max_examples=40)
    def test_fixed_round_trip(self, seed, d):
        rng = np.random.default_rng(seed)
        spec = gaussian_fixed_cov_spec(random_spd(rng, d))
        zeta = rng.normal(size=d)
        np.testing.assert_allclose(spec.grad_A_inverse(spec.grad_A(zeta)), zeta, atol=1e-10)

    @given(seeds)
    @settings(max_examples=40)
    def test_gradient_monotone(self, seed):
        rng = np.random.default_rng(seed)
        d = 2
        spec = gaussian_full_spec(d)
        z1 = spec.upsilon(rng.normal(size=d), random_spd(rng, d))
        z2 = spec.upsilon(rng.normal(size=d), random_spd(rng, d))
        assert (spec.grad_A(z1) - spec.grad_A(z2)) @ (z1 - z2) > 0

    def test_kernel_matches_scipy(self, rng):
        d = 3
        mean, cov = rng.normal(size=d), random_spd(rng, d)
        y = rng.normal(size=(7, d))
        ref = stats.multivariate_normal(mean, cov).logpdf(y)
        spec = gaussian_full_spec(d)
        np.testing.assert_allclose(spec.log_kernel(spec.upsilon(mean, cov), y), ref, atol=1e-10)
        dspec = gaussian_diag_spec(d)
        var = np.diag(cov)
        ref = stats.multivariate_normal(mean, np.diag(var)).logpdf(y)
        np.testing.assert_allclose(dspec.log_kernel(dspec.upsilon(mean, var), y), ref, atol=1e-10)
        fspec = gaussian_fixed_cov_spec(cov)
        ref = stats.multivariate_normal(mean, cov).logpdf(y)
        np.testing.assert_allclose(fspec.log_kernel(fspec.upsilon(mean), y), ref, atol=1e-10)
        np.testing.assert_allclose(GaussianParams(mean, cov).logpdf(y), ref, atol=1e-10)

    def test_image_error(self):
        spec = gaussian_full_spec(1)
        with pytest.raises(ImageError):
            spec.grad_A_inverse(np.array([0.0, 0.5]))  # implies variance -1


class TestArgmaxUpdate:
    spec = gaussian_full_spec(1)
    moments = MomentEstimate(1.0, np.array([2.0]), np.array([[3.0]]))

    def _solve(self, gamma):
        zeta = self.spec.upsilon(np.array([0.0]), np.array([[1.0]]))
        m, cov = self.spec.upsilon_inverse(solve_argmax_update(self.spec, zeta, self.moments.gaussian_stat(), gamma))
        return m[0], cov[0, 0]

    def test_full_step_matches_moments(self):
        m, v = self._solve(1.0)
        assert m == pytest.approx(2.0, abs=1e-12) and v == pytest.approx(3.0, abs=1e-12)

    def test_half_step(self):
        m, v = self._solve(0.5)
        assert m == pytest.approx(1.0, abs=1e-12) and v == pytest.approx(3.0, abs=1e-12)
        p = gaussian_update(GaussianParams([0.0], [[1.0]]), self.moments, 0.5)
        assert p.mean[0] == pytest.approx(1.0) and p.cov[0, 0] == pytest.approx(3.0)

    def test_tiny_step_is_identity(self):
        m, v = self._solve(1e-16)
        assert abs(m) < 1e-12 and abs(v - 1.0) < 1e-12
        p = gaussian_update(GaussianParams([0.0], [[1.0]]), self.moments, 1e-16)
        assert abs(p.mean[0]) < 1e-12 and abs(p.cov[0, 0] - 1.0) < 1e-12

    def test_gamma_range(self):
        with pytest.raises(ValueError):
            solve_argmax_update(self.spec, np.array([0.0, 1.0]), self.moments.gaussian_stat(), 0.0)
        with pytest.raises(ValueError):
            gaussian_update(GaussianParams([0.0], [[1.0]]), self.moments, 1.5)

    @given(seeds, st.integers(1, 3), st.floats(0.01, 1.0))
    @settings(max_examples=40, deadline=None)
    def test_parameterization_invariance(self, seed, d, gamma):
        rng = np.random.default_rng(seed)
        spec = gaussian_full_spec(d)
        params = GaussianParams(rng.normal(size=d), random_spd(rng, d))
        mom = MomentEstimate(1.0, rng.normal(size=d), random_spd(rng, d))
        zeta = solve_argmax_update(spec, spec.upsilon(params.mean, params.cov), mom.gaussian_stat(), gamma)
        m, cov = spec.upsilon_inverse(zeta)
        direct = gaussian_update(params, mom, gamma)
        np.testing.assert_allclose(m, direct.mean, atol=1e-10)
        np.testing.assert_allclose(cov, direct.cov, atol=1e-10)

    @given(seeds, st.integers(1, 5), st.floats(0.01, 1.0))
    @settings(max_examples=40)
    def test_diagonal_factorizes(self, seed, d, gamma):
        rng = np.random.default_rng(seed)
        spec = gaussian_diag_spec(d)
        mean, var = rng.normal(size=d), rng.uniform(0.3, 2.0, size=d)
        mh, vh = rng.normal(size=d), rng.uniform(0.3, 2.0, size=d)
        stat = np.concatenate([mh, -0.5 * (vh + mh * mh)])
        joint = solve_argmax_update(spec, spec.upsilon(mean, var), stat, gamma)
        m_joint, v_joint = spec.upsilon_inverse(joint)
        one = gaussian_diag_spec(1)
        for a in range(d):
            z = solve_argmax_update(one, one.upsilon(mean[a:a + 1], var[a:a + 1]),
                                    np.array([mh[a], -0.5 * (vh[a] + mh[a] ** 2)]), gamma)
            m1, v1 = one.upsilon_inverse(z)
            assert m_joint[a] == pytest.approx(m1[0], abs=1e-12)
            assert v_joint[a] == pytest.approx(v1[0], abs=1e-12)


class TestGaussianUpdate:
    @pytest.mark.parametrize("d", [1, 2])
    def test_alpha_zero_full_step_moment_matches_gaussian_target(self, d):
        mu = np.array([1.0, -0.5])[:d]
        cov = np.array([[1.5, 0.4], [0.4, 0.8]])[:d, :d]
        grid = build_grid("gauss-hermite", d, 64 if d == 2 else 128, scale=2.0)
        log_p = stats.multivariate_normal(mu, cov).logpdf(grid.nodes)
        state = MixtureState([1.0], [GaussianParams(np.zeros(d), np.eye(d))])
        s = exact_stats(state, np.atleast_1d(log_p), grid, 0.0)
        new = gaussian_update(state.components[0], s.moments[0], 1.0)
        np.testing.assert_allclose(new.mean, mu, atol=1e-8)
        np.testing.assert_allclose(new.cov, cov, atol=1e-8)

    def test_symmetrized_and_jitter(self):
        cov, L = safe_cholesky(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert np.allclose(cov, cov.T)
        assert np.all(np.isfinite(L))
        with pytest.raises(ImageError):
            safe_cholesky(np.array([[1.0, 0.0], [0.0, -1.0]]))
        with pytest.raises(ImageError):
            GaussianParams([0.0], [[-1.0]])

    def test_update_raises_image_error_for_indefinite_moments(self):
        mom = MomentEstimate(1.0, np.array([0.0]), np.array([[-5.0]]))
        with pytest.raises(ImageError):
            gaussian_update(GaussianParams([0.0], [[1.0]]), mom, 1.0)


def _quadrature_g(spec, zeta, zeta0, grid, log_phi):
    pi = np.exp(log_phi - np.max(log_phi)) * grid.weights
    pi /= pi.sum()
    return -pi @ (spec.log_kernel(zeta, grid.nodes) - spec.log_kernel(zeta0, grid.nodes))


class TestGradient:
    def test_matched_moments_give_zero(self, rng):
        spec = gaussian_full_spec(2)
        zeta = spec.upsilon(rng.normal(size=2), random_spd(rng, 2))
        np.testing.assert_allclose(grad_g_canonical(spec, zeta, spec.grad_A(zeta)), 0.0, atol=1e-14)

    def test_fixed_cov_origin(self):
        spec = gaussian_fixed_cov_spec(np.eye(3))
        s = np.array([1.0, 2.0, -1.0])
        np.testing.assert_allclose(grad_g_canonical(spec, np.zeros(3), s), -s)

    def test_closed_form_objective_matches_quadrature(self, rng):
        spec = gaussian_full_spec(1)
        grid = build_grid("uniform-grid", 1, 3001, bounds=(-30.0, 30.0))
        log_phi = stats.norm.logpdf(grid.nodes[:, 0], 1.0, 1.3) * 0.7
        pi = np.exp(log_phi) * grid.weights
        stat = (pi / pi.sum()) @ spec.sufficient_stat(grid.nodes)
        z0 = spec.upsilon([0.0], [[1.0]])
        z = spec.upsilon([0.4], [[2.0]])
        assert g_objective(spec, z, z0, stat) == pytest.approx(_quadrature_g(spec, z, z0, grid, log_phi), abs=1e-10)


class TestGradientSteps:
    def test_example(self):
        cov = np.diag([1.0, 4.0])
        np.testing.assert_allclose(gradient_step_canonical([1.0, 1.0], cov, [0.0, 0.0], 1.0), [0.75, 0.0])
        np.testing.assert_allclose(gradient_step_noncanonical([1.0, 1.0], cov, [0.0, 0.0], 1.0), [0.0, 0.75])

    @given(seeds, st.floats(0.1, 5.0), st.floats(0.01, 1.0))
    @settings(max_examples=30)
    def test_scalar_covariance_steps_coincide(self, seed, s2, gamma):
        rng = np.random.default_rng(seed)
        theta, y = rng.normal(size=3), rng.normal(size=3)
        cov = s2 * np.eye(3)
        a = gradient_step_canonical(theta, cov, y, gamma)
        b = gradient_step_noncanonical(theta, cov, y, gamma)
        np.testing.assert_allclose(a, b, atol=1e-12)
        np.testing.assert_allclose(a, (1 - gamma) * theta + gamma * y, atol=1e-12)

    @given(seeds, st.floats(0.05, 1.0))
    @settings(max_examples=30, deadline=None)
    def test_steps_never_increase_g(self, seed, gamma):
        rng = np.random.default_rng(seed)
        cov = random_spd(rng, 2, lo=0.2)
        spec = gaussian_fixed_cov_spec(cov)
        grid = build_grid("gauss-hermite", 2, 48, scale=3.0)
        w = rng.uniform(0.2, 1.0, 2)
        log_phi = np.logaddexp(np.log(w[0]) + stats.multivariate_normal(rng.normal(size=2), np.eye(2)).logpdf(grid.nodes),
                               np.log(w[1]) + stats.multivariate_normal(rng.normal(size=2), 0.5 * np.eye(2)).logpdf(grid.nodes))
        pi = np.exp(log_phi) * grid.weights
        y_mean = (pi / pi.sum()) @ grid.nodes
        theta = rng.normal(size=2) * 2
        z0 = spec.upsilon(theta)
        for step in (gradient_step_canonical, gradient_step_noncanonical):
            z1 = spec.upsilon(step(theta, cov, y_mean, gamma))
            assert _quadrature_g(spec, z1, z0, grid, log_phi) <= 1e-12
