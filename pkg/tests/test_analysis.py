from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from plgp.analysis import (
    DensityPair,
    contraction_curve,
    kl_divergence,
    kl_sup_bound,
    kl_upper_bound,
    l1_distance_bound,
    l1_distance_exact,
    mc_l1_distance,
    random_density_pair,
)
from plgp.errors import ShapeError
from plgp.experiment import ExperimentConfig, cell_data_seed
from plgp.kernels import rbf, scaled
from plgp.model import Dataset, ModelConfig, posterior_cate
from plgp.synthetic import GpDraw, SimSpec, simulate


def single(d_theta, d_f, p1=1.0, s=1.0):
    return DensityPair([d_theta], [d_f], [0.0], [0.0], s, [p1], [1.0])


def identical(rng, k=6):
    th, f = rng.normal(size=(2, k))
    return DensityPair(th, f, th, f, 2.0, rng.uniform(size=k), np.full(k, 1 / k))


class TestKl:
    def test_identical_is_zero(self, rng):
        pair = identical(rng)
        assert kl_divergence(pair) == 0.0
        assert kl_upper_bound(pair) == 0.0
        assert l1_distance_bound(pair) == 0.0

    def test_single_point_treated(self):
        assert kl_divergence(single(1.0, 0.0)) == pytest.approx(0.5)

    def test_nonnegative(self, rng):
        for _ in range(200):
            assert kl_divergence(random_density_pair(rng)) >= 0.0

    def test_matches_numerical_integration(self):
        pair = DensityPair([0.3, -1.0], [0.2, 0.5], [1.1, 0.0], [-0.4, 0.1], 1.7, [0.3, 0.8], [0.6, 0.4])
        mu0, mu1 = pair.arm_means()
        sd = 1 / np.sqrt(pair.noise_precision)
        total = 0.0
        for i, w_row in enumerate(pair.arm_weights()):
            for t, w in enumerate(w_row):
                p0, p1 = norm(mu0[i, t], sd), norm(mu1[i, t], sd)
                val, _ = integrate.quad(lambda y: p0.pdf(y) * (p0.logpdf(y) - p1.logpdf(y)), -20, 20)
                total += w * val
        assert kl_divergence(pair) == pytest.approx(total, rel=1e-8)

    def test_stated_bound_tight_without_nuisance_difference(self):
        pair = single(1.7, 0.0, s=2.5)
        assert kl_upper_bound(pair) == pytest.approx(kl_divergence(pair), rel=1e-15)

    def test_stated_bound_fails_when_differences_align(self):
        # theta and f differences of equal sign at a surely-treated point
        pair = single(1.0, 1.0)
        assert kl_divergence(pair) == pytest.approx(2.0)
        assert kl_upper_bound(pair) == pytest.approx(1.5)

    def test_sup_bound_holds(self, rng):
        for _ in range(1000):
            pair = random_density_pair(rng)
            assert kl_divergence(pair) <= kl_sup_bound(pair)

    def test_weights_validated(self):
        with pytest.raises(ShapeError):
            DensityPair([0.0, 1.0], [0, 0], [0, 0], [0, 0], 1.0, [0.5, 0.5], [0.5, 0.6])


class TestL1:
    def test_exact_matches_quadrature(self):
        pair = DensityPair([0.4], [-0.3], [1.0], [0.2], 0.8, [0.35], [1.0])
        mu0, mu1 = pair.arm_means()
        sd = 1 / np.sqrt(0.8)
        total = 0.0
        for t, w in enumerate(pair.arm_weights()[0]):
            val, _ = integrate.quad(lambda y: abs(norm.pdf(y, mu0[0, t], sd) - norm.pdf(y, mu1[0, t], sd)), -30, 30,
                                    points=[mu0[0, t], mu1[0, t]])
            total += w * val
        assert l1_distance_exact(pair) == pytest.approx(total, rel=1e-8)

    def test_mc_agrees_with_exact(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            pair = random_density_pair(rng)
            est, se = mc_l1_distance(pair, rng, 50_000)
            assert abs(est - l1_distance_exact(pair)) <= 4 * se + 1e-12

    def test_pinsker_chain_on_exact_distance(self, rng):
        for _ in range(500):
            pair = random_density_pair(rng)
            assert l1_distance_exact(pair) <= l1_distance_bound(pair) + 1e-12
            assert l1_distance_bound(pair) <= np.sqrt(2 * kl_sup_bound(pair)) + 1e-12

    def test_bound_monotone_in_kl(self):
        bounds = [l1_distance_bound(single(d, 0.0)) for d in np.linspace(0, 3, 20)]
        assert np.all(np.diff(bounds) > 0)

    def test_identical_mc_is_zero(self, rng):
        est, se = mc_l1_distance(identical(rng), rng, 1000)
        assert est == 0.0 and se == 0.0


class TestContraction:
    def test_noiseless_dense_interpolation(self):
        spec = SimSpec(m=20, noise_precision=1e12)
        res = contraction_curve(spec, [400], [0, 1], fit_hyperparameters=False,
                                model=ModelConfig(rbf(1.0), rbf(1.0), 1e6))
        assert all(r.mse < 0.05 for r in res)

    def test_zero_truth_mse_is_mean_square_estimate(self):
        spec = SimSpec(m=15, theta_source=GpDraw(rbf(1.0), amplitude=0.0))
        res = contraction_curve(spec, [40], [3], fit_hyperparameters=False)
        sim = simulate(replace(spec, n=40, seed=cell_data_seed(0, 3)))
        est = posterior_cate(ExperimentConfig(sim=spec).reference_model(), sim.data, sim.Xq).mean
        assert res[0].mse == pytest.approx(np.mean(est ** 2), rel=1e-5)

    def test_posterior_mean_shrinks_with_prior_amplitude(self):
        sim = simulate(SimSpec(n=60, m=15, theta_source=GpDraw(rbf(1.0), amplitude=0.0), seed=3))
        sizes = []
        for tau in (1.0, 1e2, 1e4, 1e6):
            est = posterior_cate(ModelConfig(scaled(tau, 1.0), rbf(1.0)), sim.data, sim.Xq).mean
            sizes.append(np.mean(est ** 2))
        assert all(a > b for a, b in zip(sizes, sizes[1:]))
        assert sizes[-1] < 1e-8
