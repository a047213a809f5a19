"""The brute-force references themselves: DFT summation, grid Bayes, MC KL."""

import numpy as np
import pytest

from alps.domain import draw_cn
from alps.oracles import GridDensity, grid_posterior_2d, mc_kl, naive_dft


class TestNaiveDft:
    def test_impulse_flat_spectrum(self):
        x = np.zeros((8, 8), dtype=np.complex128)
        x[0, 0] = 1.0
        out = naive_dft(x)
        np.testing.assert_allclose(out, 1.0 / 8.0, atol=1e-12)

    def test_matches_fft(self):
        rng = np.random.default_rng(0)
        x = draw_cn(rng, (8, 8))
        np.testing.assert_allclose(naive_dft(x), np.fft.fft2(x, norm="ortho"), atol=1e-10)

    def test_inverse_matches_ifft(self):
        rng = np.random.default_rng(1)
        x = draw_cn(rng, (6, 6))
        np.testing.assert_allclose(
            naive_dft(x, inverse=True), np.fft.ifft2(x, norm="ortho"), atol=1e-10
        )

    def test_parseval(self):
        rng = np.random.default_rng(2)
        x = draw_cn(rng, (8, 8))
        assert np.linalg.norm(naive_dft(x)) == pytest.approx(np.linalg.norm(x), rel=1e-12)

    def test_size_guard(self):
        with pytest.raises(ValueError):
            naive_dft(np.zeros((17, 4), dtype=np.complex128))


class TestGridPosterior:
    def test_flat_likelihood_returns_prior(self):
        xs = np.linspace(-5, 5, 201)
        ys = np.linspace(-5, 5, 201)

        def log_prior(p):
            return -(p[..., 0] ** 2 + p[..., 1] ** 2) / 2.0

        grid = grid_posterior_2d(log_prior, lambda p: np.zeros(p.shape[:-1]), xs, ys)
        mean, var = grid.moments()
        np.testing.assert_allclose(mean, 0, atol=1e-10)
        np.testing.assert_allclose(var, 1.0, rtol=1e-3)

    def test_delta_likelihood_concentrates(self):
        xs = np.linspace(-2, 2, 101)
        ys = np.linspace(-2, 2, 101)

        def log_lik(p):
            return -((p[..., 0] - 0.5) ** 2 + (p[..., 1] + 0.5) ** 2) / (2 * 1e-6)

        grid = grid_posterior_2d(lambda p: np.zeros(p.shape[:-1]), log_lik, xs, ys)
        peak = np.unravel_index(np.argmax(grid.density), grid.density.shape)
        assert abs(xs[peak[0]] - 0.5) <= 0.03
        assert abs(ys[peak[1]] + 0.5) <= 0.03

    def test_gaussian_product_moments(self):
        # N(0,1) prior x N(2,1) likelihood per axis -> posterior N(1, 0.5)
        xs = np.linspace(-6, 8, 701)
        ys = np.linspace(-6, 8, 701)

        def log_prior(p):
            return -(p[..., 0] ** 2 + p[..., 1] ** 2) / 2.0

        def log_lik(p):
            return -((p[..., 0] - 2.0) ** 2 + (p[..., 1] - 2.0) ** 2) / 2.0

        grid = grid_posterior_2d(log_prior, log_lik, xs, ys)
        mean, var = grid.moments()
        np.testing.assert_allclose(mean, [1.0, 1.0], atol=1e-6)
        np.testing.assert_allclose(var, [0.5, 0.5], rtol=1e-4)

    def test_grid_size_guard(self):
        big = np.linspace(0, 1, 2000)
        with pytest.raises(ValueError):
            grid_posterior_2d(lambda p: 0, lambda p: 0, big, big)

    def test_normalization_enforced(self):
        xs = np.linspace(0, 1, 11)
        bad = np.ones((11, 11))
        with pytest.raises(ValueError):
            GridDensity(xs, xs, bad, cell_area=1.0)


class TestMcKl:
    def test_identical_distributions_zero(self):
        rng = np.random.default_rng(3)
        logp = lambda x: -0.5 * x**2
        est, se = mc_kl(lambda n: rng.standard_normal(n), logp, logp, 10_000)
        assert est == 0.0

    def test_known_gaussian_kl(self):
        # KL(N(0,1) || N(1,1)) = 0.5
        rng = np.random.default_rng(4)
        est, se = mc_kl(
            lambda n: rng.standard_normal(n),
            lambda x: -0.5 * x**2,
            lambda x: -0.5 * (x - 1.0) ** 2,
            200_000,
        )
        assert est == pytest.approx(0.5, abs=3 * se)
        assert se < 0.01

    def test_stderr_clt_rate(self):
        logp = lambda x: -0.5 * x**2
        logq = lambda x: -0.5 * (x - 0.5) ** 2
        _, se1 = mc_kl(lambda n: np.random.default_rng(5).standard_normal(n), logp, logq, 40_000)
        _, se4 = mc_kl(lambda n: np.random.default_rng(5).standard_normal(n), logp, logq, 160_000)
        assert se4 == pytest.approx(se1 / 2.0, rel=0.1)

    def test_draw_count_guard(self):
        with pytest.raises(ValueError):
            mc_kl(lambda n: np.zeros(n), lambda x: x, lambda x: x, 100)
