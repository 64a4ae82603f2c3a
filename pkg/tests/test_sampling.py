import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from alphamix.components import StudentTParams
from alphamix.divergence import build_grid
from alphamix.expfam import GaussianParams
from alphamix.mixture import MixtureState, component_log_densities, eval_log_mixture
from alphamix.sampling import (SAMPLERS, draw_samples, estimate_stats, exact_stats, rng_stream)
from alphamix.targets import Target, builtin_target


def mixture_1d(means, variances, weights=None):
    J = len(means)
    w = np.full(J, 1.0 / J) if weights is None else np.asarray(weights, dtype=float)
    return MixtureState(w, [GaussianParams([m], [[v]]) for m, v in zip(means, variances)])


class TestStreams:
    def test_same_key_same_batch(self):
        s = mixture_1d([-1.0, 2.0], [1.0, 0.5], [0.3, 0.7])
        for kind in SAMPLERS:
            a = draw_samples(s, kind, 100, rng_stream(7, 3, 11))
            b = draw_samples(s, kind, 100, rng_stream(7, 3, 11))
            assert np.array_equal(a.points, b.points)
            assert np.array_equal(a.log_q, b.log_q)
            assert np.array_equal(a.component_indices, b.component_indices)

    @pytest.mark.parametrize("other", [(7, 4, 11), (8, 3, 11), (7, 3, 12)])
    def test_distinct_keys_distinct_streams(self, other):
        x = rng_stream(7, 3, 11).random(64)
        y = rng_stream(*other).random(64)
        assert np.all(x != y)

    def test_negative_key_rejected(self):
        with pytest.raises(ValueError):
            rng_stream(-1, 0, 0)

    def test_large_seed(self):
        assert rng_stream(2 ** 64 - 1, 0, 0).random() != rng_stream(2 ** 64 - 2, 0, 0).random()


class TestDraws:
    def test_single_component_samplers_identically_distributed(self):
        s = mixture_1d([1.5], [2.0])
        a = draw_samples(s, "is_n", 20000, rng_stream(1, 0, 0))
        b = draw_samples(s, "is_unif", 20000, rng_stream(1, 0, 1))
        ref = stats.norm(1.5, np.sqrt(2.0)).cdf
        assert stats.kstest(a.points[:, 0], ref).pvalue > 1e-4
        assert stats.kstest(b.points[:, 0], ref).pvalue > 1e-4
        assert stats.ks_2samp(a.points[:, 0], b.points[:, 0]).pvalue > 1e-4
        np.testing.assert_allclose(a.log_q, s.components[0].logpdf(a.points), atol=1e-12)
        np.testing.assert_allclose(b.log_q, s.components[0].logpdf(b.points), atol=1e-12)

    def test_degenerate_weights(self):
        s = mixture_1d([0.0, 5.0, 9.0], [1.0, 1.0, 1.0], [1e-15, 1.0 - 2e-15, 1e-15])
        batch = draw_samples(s, "is_n", 1000, rng_stream(0, 0, 0))
        assert np.all(batch.component_indices == 1)

    def test_unif_indices_uniform(self):
        s = mixture_1d([0.0, 1.0, 2.0, 3.0], [1.0] * 4, [0.7, 0.1, 0.1, 0.1])
        batch = draw_samples(s, "is_unif", 10000, rng_stream(2024, 0, 0))
        counts = np.bincount(batch.component_indices, minlength=4)
        assert stats.chisquare(counts).pvalue > 1e-4

    def test_is_n_indices_follow_weights(self):
        w = np.array([0.6, 0.3, 0.1])
        s = mixture_1d([0.0, 1.0, 2.0], [1.0] * 3, w)
        batch = draw_samples(s, "is_n", 20000, rng_stream(5, 0, 0))
        counts = np.bincount(batch.component_indices, minlength=3)
        assert stats.chisquare(counts, 20000 * w).pvalue > 1e-4

    def test_unif_log_q(self):
        s = mixture_1d([0.0, 3.0], [1.0, 2.0], [0.9, 0.1])
        batch = draw_samples(s, "is_unif", 50, rng_stream(0, 0, 0))
        lk = component_log_densities(s, batch.points)
        np.testing.assert_allclose(batch.log_q, np.log(0.5 * np.exp(lk).sum(axis=1)), atol=1e-12)

    def test_student_draws(self):
        s = MixtureState([1.0], [StudentTParams([1.0], [[4.0]], 3.0)], "student")
        batch = draw_samples(s, "is_n", 20000, rng_stream(9, 0, 0))
        ref = stats.t(df=3.0, loc=1.0, scale=2.0).cdf
        assert stats.kstest(batch.points[:, 0], ref).pvalue > 1e-4

    def test_multivariate_covariance(self):
        cov = np.array([[2.0, 0.6], [0.6, 1.0]])
        s = MixtureState([1.0], [GaussianParams([1.0, -1.0], cov)])
        batch = draw_samples(s, "is_n", 40000, rng_stream(3, 0, 0))
        np.testing.assert_allclose(np.cov(batch.points.T), cov, atol=0.05)

    def test_bad_arguments(self):
        s = mixture_1d([0.0], [1.0])
        with pytest.raises(ValueError):
            draw_samples(s, "bogus", 10, rng_stream(0, 0, 0))
        with pytest.raises(ValueError):
            draw_samples(s, "is_n", 0, rng_stream(0, 0, 0))


class TestEstimates:
    def test_single_point_formula(self):
        s = mixture_1d([0.0, 2.0], [1.0, 1.5], [0.4, 0.6])
        target = builtin_target("imbalanced_gmm", 1)
        alpha = 0.3
        batch = draw_samples(s, "is_unif", 1, rng_stream(0, 0, 0))
        est = estimate_stats(batch, s, target, alpha)
        y = batch.points
        k = np.exp(component_log_densities(s, y))[0]
        mu = s.weights @ k
        p = np.exp(target.log_p(y))[0]
        q = 0.5 * k.sum()
        expected = k * (mu / p) ** (alpha - 1.0) / q
        np.testing.assert_allclose(est.integrals, expected, rtol=1e-12)
        for mom in est.moments:
            np.testing.assert_array_equal(mom.mean, y[0])

    def test_target_evaluated_once_per_point(self):
        s = mixture_1d([0.0, 2.0, 4.0], [1.0] * 3)
        target = builtin_target("ewgmm", 1)
        batch = draw_samples(s, "is_n", 137, rng_stream(0, 0, 0))
        estimate_stats(batch, s, target, 0.2)
        assert target.evaluations == 137

    @given(st.floats(0.01, 100.0), st.floats(0.0, 0.9))
    @settings(max_examples=25, deadline=None)
    def test_moments_invariant_to_target_scale(self, c, alpha):
        s = mixture_1d([-1.0, 1.5], [1.0, 0.7], [0.3, 0.7])
        batch = draw_samples(s, "is_n", 64, rng_stream(4, 0, 0))
        a = estimate_stats(batch, s, builtin_target("ewgmm", 1, c=1.0), alpha)
        b = estimate_stats(batch, s, builtin_target("ewgmm", 1, c=c), alpha)
        for ma, mb in zip(a.moments, b.moments):
            np.testing.assert_allclose(ma.mean, mb.mean, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(ma.cov, mb.cov, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(b.log_integrals - a.log_integrals,
                                   (1 - alpha) * np.log(c), atol=1e-10)

    def test_mc_matches_quadrature(self):
        s = mixture_1d([-1.0, 1.5], [1.0, 0.7], [0.3, 0.7])
        target = builtin_target("ewgmm", 1)
        grid = build_grid("uniform-grid", 1, 3001, bounds=(-30.0, 30.0))
        ex = exact_stats(s, target.log_p(grid.nodes), grid, 0.4)
        batch = draw_samples(s, "is_n", 200000, rng_stream(1, 0, 0))
        mc = estimate_stats(batch, s, target, 0.4)
        np.testing.assert_allclose(mc.integrals, ex.integrals, rtol=0.02)
        for a, b in zip(mc.moments, ex.moments):
            np.testing.assert_allclose(a.mean, b.mean, atol=0.03)

    def test_underflowed_component_unavailable(self):
        s = mixture_1d([0.0, 400.0], [1.0, 1.0])
        target = Target(lambda y: -0.5 * y[:, 0] ** 2, 1)
        batch = draw_samples(s, "is_unif", 20, rng_stream(0, 0, 0))
        est = estimate_stats(batch, s, target, 0.0)
        assert est.moments[0] is not None
        assert est.moments[1] is None and est.ess[1] == 0.0
        assert list(est.available) == [True, False]

    def test_exact_stats_total_mass(self):
        # alpha = 0: sum_j I_j = int p
        s = mixture_1d([-1.0, 1.5], [1.0, 0.7], [0.3, 0.7])
        target = builtin_target("ewgmm", 1, c=2.0)
        grid = build_grid("uniform-grid", 1, 3001, bounds=(-30.0, 30.0))
        ex = exact_stats(s, target.log_p(grid.nodes), grid, 0.0)
        assert np.sum(s.weights * ex.integrals) == pytest.approx(2.0, rel=1e-10)

    def test_ess_bounds(self):
        s = mixture_1d([-1.0, 1.5], [1.0, 0.7])
        batch = draw_samples(s, "is_n", 300, rng_stream(0, 0, 0))
        est = estimate_stats(batch, s, builtin_target("ewgmm", 1), 0.5)
        assert np.all(est.ess >= 1.0 - 1e-12) and np.all(est.ess <= 300 + 1e-9)
