import math

import numpy as np
import pytest
from scipy import stats

from conftest import normal_pair, random_spd
from knnorder.densities import (GaussianSpec, PopulationPair, Region, eval_density, limit_rho,
                                mixture_density, posterior_psi, weighted_lambda)

STEP = 1e-5


def central_diff(fun, z, step=STEP):
    """Jacobian of fun at z by central differences; fun maps (d,) to an array."""
    z = np.asarray(z, dtype=float)
    cols = []
    for j in range(z.shape[0]):
        e = np.zeros_like(z)
        e[j] = step
        cols.append((np.asarray(fun(z + e)) - np.asarray(fun(z - e))) / (2 * step))
    return np.stack(cols, axis=-1)


class TestGaussianSpec:
    def test_standard_normal_at_mode(self):
        value, grad, hess = eval_density(GaussianSpec.isotropic([0.0]), [0.0])
        assert value == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)
        assert round(value, 6) == 0.398942
        np.testing.assert_array_equal(grad, [0.0])
        assert hess[0, 0] == pytest.approx(-value)

    def test_shifted_normal_value_and_gradient(self):
        spec = GaussianSpec.isotropic([-0.5])
        value, grad, _ = eval_density(spec, [0.0])
        assert round(value, 6) == 0.352065
        fd = central_diff(spec.pdf, np.array([0.0]))
        assert grad[0] == pytest.approx(fd[0], rel=1e-8)
        assert round(grad[0], 6) == -0.176033

    def test_matches_scipy(self):
        rng = np.random.default_rng(1)
        for d in (1, 2, 5):
            cov = random_spd(rng, d)
            mean = rng.normal(size=d)
            z = rng.normal(size=(20, d))
            spec = GaussianSpec(mean, cov)
            np.testing.assert_allclose(spec.pdf(z), stats.multivariate_normal(mean, cov).pdf(z), rtol=1e-12)

    def test_derivatives_match_finite_differences(self):
        rng = np.random.default_rng(2)
        worst_grad = worst_hess = 0.0
        for case in range(1000):
            d = (1, 2, 3, 5)[case % 4]
            spec = GaussianSpec(rng.normal(size=d), random_spd(rng, d))
            z = spec.mean + spec.chol @ rng.uniform(-2, 2, size=d)
            value, grad, hess = eval_density(spec, z)
            fd_grad = central_diff(spec.pdf, z)
            fd_hess = central_diff(lambda x: eval_density(spec, x)[1], z)
            scale = max(np.linalg.norm(grad), value)
            worst_grad = max(worst_grad, np.linalg.norm(grad - fd_grad) / scale)
            worst_hess = max(worst_hess, np.linalg.norm(hess - fd_hess) / max(np.linalg.norm(hess), value))
        assert worst_grad < 1e-5
        assert worst_hess < 1e-5

    def test_integrates_to_one(self):
        rng = np.random.default_rng(3)
        spec = GaussianSpec([0.3, -0.2], [[1.0, 0.5], [0.5, 2.0]])
        # importance sampling from a wider normal
        proposal = stats.multivariate_normal([0, 0], 4 * np.eye(2))
        pts = proposal.rvs(200_000, random_state=rng)
        w = spec.pdf(pts) / proposal.pdf(pts)
        assert abs(w.mean() - 1) < 4 * w.std() / math.sqrt(len(w))

    @pytest.mark.parametrize("cov, message", [
        ([[1.0, 0.5], [0.4, 1.0]], "symmetric"),
        ([[1.0, 2.0], [2.0, 1.0]], "positive definite"),
        ([[0.0, 0.0], [0.0, 1.0]], "positive definite"),
        ([1.0, 0.0, 1.0], "2x2"),
    ])
    def test_rejects_bad_covariance(self, cov, message):
        with pytest.raises(ValueError, match=message):
            GaussianSpec([0.0, 0.0], cov)

    def test_single_point_and_batch_agree(self):
        spec = GaussianSpec([0.0, 1.0], [[2.0, 0.3], [0.3, 1.0]])
        pts = np.array([[0.1, 0.2], [-1.0, 3.0]])
        batch = spec.pdf(pts)
        assert np.ndim(spec.pdf(pts[0])) == 0
        np.testing.assert_array_equal([spec.pdf(p) for p in pts], batch)

    def test_rejects_wrong_dimension(self):
        with pytest.raises(ValueError, match="dimension"):
            GaussianSpec.isotropic([0.0, 0.0]).pdf([1.0, 2.0, 3.0])


class TestPopulationPair:
    def test_prior(self):
        assert normal_pair([-0.5], [0.5], 100, 200).p == pytest.approx(1 / 3)

    @pytest.mark.parametrize("mu, nu", [(0, 100), (100, -1), (float("nan"), 1), (float("inf"), 1)])
    def test_rejects_bad_intensity(self, mu, nu):
        with pytest.raises(ValueError):
            normal_pair([-0.5], [0.5], mu, nu)

    def test_rejects_mixed_dimensions(self):
        with pytest.raises(ValueError, match="dimension"):
            PopulationPair(GaussianSpec.isotropic([0.0]), GaussianSpec.isotropic([0.0, 0.0]), 1, 1)


class TestPosterior:
    def test_symmetric_crossing(self, sym1):
        assert posterior_psi(sym1, [0.0]) == pytest.approx(0.5, abs=1e-15)

    def test_unequal_intensities_at_crossing(self, asym1):
        assert posterior_psi(asym1, [0.0]) == pytest.approx(1 / 3, abs=1e-15)

    def test_log_two_point(self, sym1):
        # f/g = exp(-z) for this pair
        z = -0.6931
        brute = sym1.f.pdf([z]) / (sym1.f.pdf([z]) + sym1.g.pdf([z]))
        assert posterior_psi(sym1, [z]) == pytest.approx(brute, rel=1e-14)
        assert posterior_psi(sym1, [z]) == pytest.approx(math.exp(-z) / (math.exp(-z) + 1), rel=1e-12)
        assert posterior_psi(sym1, [z]) == pytest.approx(2 / 3, abs=1e-4)

    def test_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(4)
        pair = normal_pair([1.0, 0.0], [0.0, 1.0], 30, 70)
        psi = posterior_psi(pair, rng.uniform(-6, 6, size=(1000, 2)))
        assert np.all((psi > 0) & (psi < 1))
        np.testing.assert_allclose(psi + (1 - psi), 1.0)

    def test_psi_equals_rho_at_finite_intensities(self):
        rng = np.random.default_rng(5)
        pair = normal_pair([0.5, -0.5], [-0.5, 0.5], 100, 200, [[1, 0.5], [0.5, 1]])
        z = rng.normal(size=(200, 2))
        np.testing.assert_allclose(posterior_psi(pair, z), limit_rho(pair, z)[0], rtol=1e-13)
        scaled = pair.with_intensities(100 * 1000, 200 * 1000)
        np.testing.assert_allclose(posterior_psi(scaled, z), limit_rho(pair, z)[0], rtol=1e-13)


class TestLimitRho:
    def test_symmetric_crossing(self, sym1):
        value, grad, second = limit_rho(sym1, [0.0])
        assert value == pytest.approx(0.5, abs=1e-15)
        # rho = 1 / (1 + e^z) here, so rho'(0) = -1/4 exactly
        fd = central_diff(lambda z: limit_rho(sym1, z)[0], np.array([0.0]))
        assert grad[0] == pytest.approx(fd[0], rel=1e-8)
        assert grad[0] == pytest.approx(-0.25, abs=1e-14)
        assert abs(second[0]) < 1e-8

    def test_derivatives_match_finite_differences(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            d = rng.integers(1, 4)
            pair = PopulationPair(GaussianSpec(rng.normal(size=d), random_spd(rng, d)),
                                  GaussianSpec(rng.normal(size=d), random_spd(rng, d)),
                                  rng.uniform(10, 300), rng.uniform(10, 300))
            z = rng.normal(size=d)
            _, grad, second = limit_rho(pair, z)
            fd_grad = central_diff(lambda x: limit_rho(pair, x)[0], z)
            fd_second = np.diagonal(central_diff(lambda x: limit_rho(pair, x)[1], z))
            np.testing.assert_allclose(grad, fd_grad, rtol=1e-5, atol=1e-9)
            np.testing.assert_allclose(second, fd_second, rtol=1e-5, atol=1e-8)

    def test_half_iff_weighted_densities_equal(self, asym1):
        z = np.array([-math.log(2)])
        p = asym1.p
        assert limit_rho(asym1, z)[0] == pytest.approx(0.5, abs=1e-12)
        assert p * asym1.f.pdf(z) == pytest.approx((1 - p) * asym1.g.pdf(z), rel=1e-10)


class TestWeightedLambda:
    def test_equal_priors(self, sym1):
        value, grad = weighted_lambda(sym1, [0.0])
        assert value == pytest.approx(2 * sym1.f.pdf([0.0]), rel=1e-15)
        assert round(value, 6) == 0.704131
        assert grad[0] == pytest.approx(0.0, abs=1e-15)

    def test_one_third_prior(self, asym1):
        z = np.linspace(-3, 3, 13).reshape(-1, 1)
        value, grad = weighted_lambda(asym1, z)
        np.testing.assert_allclose(value, asym1.f.pdf(z) / 2 + asym1.g.pdf(z), rtol=1e-14)
        fd = np.array([central_diff(lambda x: weighted_lambda(asym1, x)[0], zi)[0] for zi in z])
        np.testing.assert_allclose(grad[:, 0], fd, rtol=1e-7, atol=1e-12)


class TestMixtureDensity:
    def test_equal_intensities(self, sym1):
        z = np.linspace(-3, 3, 7).reshape(-1, 1)
        np.testing.assert_allclose(mixture_density(sym1, z), (sym1.f.pdf(z) + sym1.g.pdf(z)) / 2, rtol=1e-15)
        assert round(mixture_density(sym1, [0.0]), 6) == 0.352065

    def test_convex_combination_where_equal(self, asym1):
        assert mixture_density(asym1, [0.0]) == pytest.approx(asym1.f.pdf([0.0]), rel=1e-15)

    def test_integrates_to_one_over_large_box(self):
        pair = normal_pair([0.5, -0.5], [-0.5, 0.5], 100, 200, [[1, 0.5], [0.5, 1]])
        box = Region.cube(-12, 12, 2)
        # scrambled Sobol points: plain uniform draws would need far more than 1e6 samples
        unit = stats.qmc.Sobol(2, scramble=True, seed=7).random_base2(20)
        pts = stats.qmc.scale(unit, box.lower, box.upper)
        values = mixture_density(pair, pts)
        assert np.all(values >= 0)
        assert 0.999 < values.mean() * box.volume < 1.001


class TestRegion:
    def test_cube(self):
        r = Region.cube(-2.5, 2.5, 3)
        assert r.d == 3 and r.volume == pytest.approx(125.0)
        np.testing.assert_array_equal(r.contains([[0, 0, 0], [0, 0, 3]]), [True, False])

    def test_rejects_empty_box(self):
        with pytest.raises(ValueError):
            Region((0.0,), (0.0,))
