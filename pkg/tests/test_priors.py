"""Analytic priors: scores, noised densities, exact conjugate posteriors."""

import configparser

import numpy as np
import pytest

from alps.domain import draw_cn, geometric_schedule
from alps.forward_model import DenseOperator, ScaledIdentityOperator
from alps.priors import GaussianPrior, GmmPrior, ScorePrior, gmm_exact_posterior, load_gmm_config

SCHED = geometric_schedule(0.1, 5.0, 12)


def wirtinger_fd(logp, x, idx, h=1e-6):
    """Finite-difference complex gradient (d/dRe + i d/dIm)/2 at one entry."""
    e = np.zeros_like(x)
    e[idx] = h
    d_re = (logp(x + e) - logp(x - e)) / (2 * h)
    e[idx] = 1j * h
    d_im = (logp(x + e) - logp(x - e)) / (2 * h)
    return 0.5 * (d_re + 1j * d_im)


class TestGaussianPrior:
    def test_zero_score_at_mean(self):
        prior = GaussianPrior(np.array([1.0 + 2.0j, -0.5j]), 0.7)
        s = prior.score(prior.mean.copy(), 3, SCHED)
        np.testing.assert_allclose(s, 0, atol=1e-15)

    def test_plug_in_value(self):
        # variance 1, sigma_i^2 = 1, offset 2 in one entry -> score -1 there
        sched = geometric_schedule(1.0, 2.0, 2)
        prior = GaussianPrior(np.zeros(2), 1.0)
        x = np.array([2.0 + 0j, 0.0])
        s = prior.score(x, 1, sched)
        np.testing.assert_allclose(s, [-1.0, 0.0], atol=1e-15)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        prior = GaussianPrior(draw_cn(rng, (4,)), 0.6)
        x = draw_cn(rng, (4,))
        for i in [1, 5, 12]:
            s = prior.score(x, i, SCHED)
            for idx in range(4):
                fd = wirtinger_fd(lambda z: prior.noised_log_density(z, i, SCHED), x, idx)
                assert abs(fd - s[idx]) <= 1e-6 * max(abs(s[idx]), 1.0)

    def test_per_entry_variance(self):
        prior = GaussianPrior(np.zeros(2), np.array([0.5, 2.0]))
        x = np.array([1.0 + 0j, 1.0 + 0j])
        s = prior.score(x, 0, SCHED)
        np.testing.assert_allclose(s, [-2.0, -0.5], atol=1e-15)

    def test_rejects_nonpositive_variance(self):
        with pytest.raises(ValueError):
            GaussianPrior(np.zeros(2), 0.0)
        with pytest.raises(ValueError):
            GaussianPrior(np.zeros(2), np.array([1.0, -1.0]))

    def test_score_decay_with_sigma(self):
        # fixed offset: |score| ~ 1 / sigma_i^2 at large sigma
        prior = GaussianPrior(np.zeros(1), 0.1)
        x = np.array([1.0 + 0j])
        sched = geometric_schedule(1.0, 100.0, 5)
        s_small = abs(prior.score(x, 1, sched)[0])
        s_big = abs(prior.score(x, 5, sched)[0])
        ratio = (sched.sigma(5) ** 2 + 0.1) / (sched.sigma(1) ** 2 + 0.1)
        assert s_small / s_big == pytest.approx(ratio, rel=1e-12)

    def test_satisfies_protocol(self):
        assert isinstance(GaussianPrior(np.zeros(1), 1.0), ScorePrior)


class TestGmmPrior:
    def make_prior(self):
        means = np.array([[0.5 + 1.0j, -0.2j], [-1.0 + 0.1j, 0.3 + 0.3j], [0.0, 1.0 + 0j]])
        return GmmPrior([0.5, 0.3, 0.2], means, [0.4, 0.8, 0.2])

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            GmmPrior([0.5, 0.6], np.zeros((2, 1)), [1.0, 1.0])
        with pytest.raises(ValueError):
            GmmPrior([1.2, -0.2], np.zeros((2, 1)), [1.0, 1.0])
        with pytest.raises(ValueError):
            GmmPrior([0.5, 0.5], np.zeros((2, 1)), [1.0, -1.0])
        with pytest.raises(ValueError):
            GmmPrior([0.5, 0.5], np.zeros((3, 1)), [1.0, 1.0])

    def test_single_component_bitmatches_gaussian(self):
        rng = np.random.default_rng(1)
        mu = draw_cn(rng, (3,))
        gmm = GmmPrior([1.0], mu[None, :], [0.6])
        gauss = GaussianPrior(mu, 0.6)
        x = draw_cn(rng, (3,))
        for i in [1, 6, 12]:
            sg = gauss.score(x, i, SCHED)
            sm = gmm.score(x, i, SCHED)
            np.testing.assert_array_equal(sm, sg)

    def test_symmetric_midpoint_zero_score(self):
        prior = GmmPrior([0.5, 0.5], np.array([[1.0 + 1.0j], [-1.0 - 1.0j]]), [0.3, 0.3])
        s = prior.score(np.array([0.0 + 0.0j]), 4, SCHED)
        np.testing.assert_allclose(s, 0, atol=1e-14)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        prior = self.make_prior()
        for i in [1, 4, 9]:
            x = draw_cn(rng, (2,))
            s = prior.score(x, i, SCHED)
            for idx in range(2):
                fd = wirtinger_fd(lambda z: prior.noised_log_density(z, i, SCHED), x, idx)
                assert abs(fd - s[idx]) <= 1e-6 * max(abs(s[idx]), 1.0)

    def test_batched_scores(self):
        rng = np.random.default_rng(3)
        prior = self.make_prior()
        xs = draw_cn(rng, (7, 2))
        batched = prior.score(xs, 5, SCHED)
        for j in range(7):
            np.testing.assert_allclose(batched[j], prior.score(xs[j], 5, SCHED), atol=1e-14)

    def test_log_density_underflow_safe(self):
        # far from all components at tiny sigma: responsibilities underflow
        # unless computed in log space
        prior = GmmPrior([0.5, 0.5], np.array([[0.0 + 0j], [100.0 + 0j]]), [1e-4, 1e-4])
        sched = geometric_schedule(1e-3, 1.0, 4)
        x = np.array([50.0 + 0j])
        s = prior.score(x, 1, sched)
        assert np.all(np.isfinite(s))
        assert np.isfinite(prior.noised_log_density(x, 1, sched))


class TestGmmExactPosterior:
    def test_scalar_conjugate_update(self):
        prior = GmmPrior([1.0], np.zeros((1, 1)), [1.0])
        post = gmm_exact_posterior(prior, ScaledIdentityOperator(1), np.array([2.0 + 0j]), 1.0)
        assert post.means[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert post.variances[0] == pytest.approx(0.5, rel=1e-12)

    def test_flat_likelihood_returns_prior(self):
        prior = GmmPrior(
            [0.6, 0.4], np.array([[1.0 + 1.0j], [-2.0 + 0j]]), [0.5, 1.5]
        )
        post = gmm_exact_posterior(prior, ScaledIdentityOperator(1), np.array([3.0 + 0j]), 1e12)
        np.testing.assert_allclose(post.weights, prior.weights, atol=1e-9)
        np.testing.assert_allclose(post.means, prior.means, atol=1e-9)
        np.testing.assert_allclose(post.variances, prior.variances, rtol=1e-9)

    def test_cluster_reweighting_direction(self):
        # likelihood near cluster 3 lifts it and suppresses cluster 2
        means = np.array([[0.0 + 1.2j], [-1.2 - 0.8j], [1.2 - 0.8j]])
        prior = GmmPrior([0.4, 0.3, 0.3], means, [0.01, 0.01, 0.01])
        post = gmm_exact_posterior(
            prior, ScaledIdentityOperator(1), np.array([1.1 - 0.7j]), 0.5
        )
        assert post.weights[1] < prior.weights[1]
        assert post.weights[2] > prior.weights[2]

    def test_weights_match_grid_integration(self):
        from alps.oracles import grid_posterior_2d

        means = np.array([[0.3 + 0.4j], [-0.5 - 0.2j]])
        prior = GmmPrior([0.55, 0.45], means, [0.05, 0.08])
        y = np.array([0.1 + 0.1j])
        noise_var = 0.3
        post = gmm_exact_posterior(prior, ScaledIdentityOperator(1), y, noise_var)

        xs = np.linspace(-2.0, 2.0, 801)
        ys = np.linspace(-2.0, 2.0, 801)
        sched0 = geometric_schedule(1e-9, 1.0, 2)  # index 0 => un-noised density

        def log_prior(p):
            z = p[..., 0] + 1j * p[..., 1]
            return prior.noised_log_density(z[..., None], 0, sched0)

        def log_lik(p):
            z = p[..., 0] + 1j * p[..., 1]
            return -np.abs(z - y[0]) ** 2 / noise_var

        grid = grid_posterior_2d(log_prior, log_lik, xs, ys)
        # integrate responsibility of component 0 over the grid
        cells = grid.cell_probabilities()
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        z = (gx + 1j * gy)[..., None]
        log_parts = []
        for k in range(2):
            comp = GmmPrior([1.0], post.means[k : k + 1], post.variances[k : k + 1])
            log_parts.append(np.log(post.weights[k]) + comp.noised_log_density(z, 0, sched0))
        log_parts = np.stack(log_parts)
        m = log_parts.max(axis=0)
        resp0 = np.exp(log_parts[0] - m) / np.exp(log_parts - m).sum(axis=0)
        w0_grid = float(np.sum(cells * resp0))
        assert w0_grid == pytest.approx(post.weights[0], abs=1e-4)

    def test_rejects_anisotropic_gram(self):
        a = np.diag([1.0, 2.0]).astype(np.complex128)
        prior = GmmPrior([1.0], np.zeros((1, 2)), [1.0])
        with pytest.raises(ValueError):
            gmm_exact_posterior(prior, DenseOperator(a), np.zeros(2, dtype=np.complex128), 1.0)

    def test_rejects_nonpositive_noise(self):
        prior = GmmPrior([1.0], np.zeros((1, 1)), [1.0])
        with pytest.raises(ValueError):
            gmm_exact_posterior(prior, ScaledIdentityOperator(1), np.array([0j]), 0.0)


class TestLoadGmmConfig:
    def test_roundtrip(self):
        cp = configparser.ConfigParser()
        cp.read_string(
            "[prior]\n"
            "weights = 0.6, 0.4\n"
            "variances = 0.1, 0.2\n"
            "mean_1 = 1.0, 2.0\n"
            "mean_2 = -0.5, 0.0\n"
        )
        prior = load_gmm_config(cp["prior"])
        np.testing.assert_allclose(prior.weights, [0.6, 0.4])
        np.testing.assert_allclose(prior.means[:, 0], [1.0 + 2.0j, -0.5 + 0.0j])
        np.testing.assert_allclose(prior.variances, [0.1, 0.2])

    def test_odd_mean_entries_rejected(self):
        cp = configparser.ConfigParser()
        cp.read_string(
            "[prior]\nweights = 1.0\nvariances = 0.1\nmean_1 = 1.0, 2.0, 3.0\n"
        )
        with pytest.raises(ValueError):
            load_gmm_config(cp["prior"])
