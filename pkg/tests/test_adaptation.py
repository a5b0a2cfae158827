"""Adaptation-function fixed point: exact cases, axioms, and oracles."""

import numpy as np
import pytest
from scipy.integrate import dblquad

from vkde.adaptation import AdaptationConfig, mu_field, mu_fixed_point
from vkde.density import DensityAccess, GaussianMixture, SampleSet, VkdeEstimate, banana_density
from vkde.exceptions import DomainError
from vkde.gauss import sqrt_spd

from conftest import random_gl, random_spd


def single_gaussian_estimate(cov=None, mean=None, d=2):
    mean = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)
    cov = np.eye(d) if cov is None else np.asarray(cov, dtype=float)
    h = sqrt_spd(cov)
    return VkdeEstimate(SampleSet(mean[None, :]), h[None])


def two_cluster_estimate(separation, d=2, spread=2.0, bw=1.0):
    """Two 3-kernel clusters separated along the first axis."""
    base = np.array([[-spread, 0.0], [0.0, 0.5], [spread, -0.5]])[:, :d]
    left = base - np.array([separation / 2, 0.0])[:d]
    right = base + np.array([separation / 2, 0.0])[:d]
    pts = np.vstack([left, right])
    return VkdeEstimate(SampleSet(pts), bw * np.eye(d))


def random_mixture(rng, n=3, d=2):
    means = rng.normal(size=(n, d), scale=1.5)
    covs = np.stack([random_spd(rng, d, scale=0.6) for _ in range(n)])
    w = rng.uniform(0.5, 1.5, size=n)
    return GaussianMixture(means, covs, w / w.sum())


class TestExactCases:
    def test_single_standard_gaussian_isotropic(self):
        # for one Gaussian component the ratio is constant in x:
        # mu^2 = Sigma^{-1} / (2 - lambda^2) exactly.
        est = single_gaussian_estimate()
        res = mu_fixed_point(est, np.zeros(2), AdaptationConfig(tol=1e-13))
        assert res.converged
        assert np.allclose(res.mu_squared, np.eye(2), atol=1e-11)
        assert np.allclose(res.mu, np.eye(2), atol=1e-11)
        off = res.mu[0, 1]
        assert abs(off) < 1e-12 and res.mu[0, 0] == pytest.approx(res.mu[1, 1], abs=1e-12)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 1.3])
    def test_single_gaussian_any_lambda(self, lam, rng):
        cov = random_spd(rng, 2)
        est = single_gaussian_estimate(cov=cov, mean=[1.0, -2.0])
        x = np.array([0.7, -1.1])
        res = mu_fixed_point(est, x, AdaptationConfig(lam=lam, tol=1e-13))
        assert res.converged
        expected = np.linalg.inv(cov) / (2.0 - lam**2)
        assert np.allclose(res.mu_squared, expected, rtol=1e-10)

    def test_result_consistency(self, rng):
        mix = random_mixture(rng)
        res = mu_fixed_point(mix, np.array([0.3, 0.1]), AdaptationConfig(tol=1e-11))
        assert res.converged
        assert np.allclose(res.mu @ res.mu, res.mu_squared, rtol=1e-12)
        assert np.all(np.linalg.eigvalsh(res.mu_squared) > 0)
        assert res.residual < 1e-11


class TestAdaptationAxioms:
    def test_shift_invariance(self, rng):
        mix = random_mixture(rng)
        a = np.array([3.2, -1.4])
        x = np.array([0.5, 0.2])
        cfg = AdaptationConfig(tol=1e-12)
        res = mu_fixed_point(mix, x, cfg)
        res_shift = mu_fixed_point(mix.shifted(a), x + a, cfg)
        assert np.allclose(res_shift.mu_squared, res.mu_squared, rtol=1e-10)

    def test_scalar_multiplication_invariance(self, rng):
        # unnormalized scaling of the density leaves mu untouched
        mix = random_mixture(rng)
        access = DensityAccess.from_analytic(mix)
        x = np.array([0.4, -0.2])
        cfg = AdaptationConfig(tol=1e-12)
        res = mu_fixed_point(access, x, cfg)
        res_scaled = mu_fixed_point(access.scaled(7.3), x, cfg)
        assert np.allclose(res_scaled.mu_squared, res.mu_squared, rtol=1e-12)

    def test_affine_equivariance(self, rng):
        # A3: mu'(x)^T mu'(x) = A^T mu(Ax)^T mu(Ax) A at rel. err 1e-6
        cfg = AdaptationConfig(tol=1e-10)
        for _ in range(3):
            mix = random_mixture(rng)
            a_mat = random_gl(rng, 2)
            x = rng.normal(size=2, scale=0.5)
            res = mu_fixed_point(mix, a_mat @ x, cfg)
            res_img = mu_fixed_point(mix.affine_image(a_mat), x, cfg)
            lhs = res_img.mu.T @ res_img.mu
            rhs = a_mat.T @ res.mu.T @ res.mu @ a_mat
            assert np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs) < 1e-6

    def test_locality_two_clusters(self):
        # A4: near one cluster, mu approaches the standalone cluster's mu as
        # the separation grows; below the noise floor the sequence may flatten.
        cfg = AdaptationConfig(tol=1e-12)
        alone = two_cluster_estimate(0.0).mixture  # both clusters overlaid
        # standalone cluster: just the left three kernels at origin offset
        base = np.array([[-2.0, 0.0], [0.0, 0.5], [2.0, -0.5]])
        alone = VkdeEstimate(SampleSet(base), np.eye(2))
        x = np.array([0.3, 0.1])
        res_alone = mu_fixed_point(alone, x, cfg)
        devs = []
        for t in (10.0, 20.0, 40.0):
            est = two_cluster_estimate(t)
            offset = np.array([-t / 2, 0.0])
            res = mu_fixed_point(est, x + offset, cfg)
            dev = np.linalg.norm(res.mu_squared - res_alone.mu_squared) / np.linalg.norm(
                res_alone.mu_squared
            )
            devs.append(float(dev))
        floor = 1e-9
        assert devs[1] <= max(devs[0], floor)
        assert devs[2] <= max(devs[1], floor)
        assert devs[-1] < 1e-3

    def test_mirror_symmetry(self):
        # two symmetric evaluation points about a symmetric estimate's axis
        pts = np.array([[0.0, 1.0], [0.0, -1.0]])
        est = VkdeEstimate(SampleSet(pts), np.eye(2))
        cfg = AdaptationConfig(tol=1e-12)
        up = mu_fixed_point(est, np.array([0.6, 0.8]), cfg)
        down = mu_fixed_point(est, np.array([0.6, -0.8]), cfg)
        flip = np.diag([1.0, -1.0])
        assert np.allclose(down.mu_squared, flip @ up.mu_squared @ flip, rtol=1e-9)


class TestMuField:
    def test_single_point_matches_pointwise(self, rng):
        mix = random_mixture(rng)
        x = np.array([0.2, -0.4])
        cfg = AdaptationConfig(tol=1e-12)
        field = mu_field(mix, [x], cfg)
        point = mu_fixed_point(mix, x, cfg)
        assert np.allclose(field[0].mu_squared, point.mu_squared, rtol=1e-10)

    def test_warm_start_equals_cold_start(self, rng):
        mix = random_mixture(rng)
        line = np.stack([np.linspace(-1.5, 1.5, 10), np.zeros(10)], axis=1)
        cfg = AdaptationConfig(tol=1e-12)
        warm = mu_field(mix, line, cfg)
        cold = [mu_fixed_point(mix, x, cfg) for x in line]
        for w, c in zip(warm, cold):
            rel = np.linalg.norm(w.mu_squared - c.mu_squared) / np.linalg.norm(c.mu_squared)
            assert rel < 1e-10

    def test_explicit_warm_seeds(self, rng):
        mix = random_mixture(rng)
        pts = np.array([[0.0, 0.0], [0.3, 0.1]])
        cfg = AdaptationConfig(tol=1e-12)
        base = mu_field(mix, pts, cfg)
        seeded = mu_field(mix, pts, cfg, warm=[r.mu_squared for r in base])
        for a, b in zip(base, seeded):
            assert np.allclose(a.mu_squared, b.mu_squared, rtol=1e-9)


class TestQuadraturePath:
    def test_matches_closed_form_on_mixture(self, rng):
        mix = random_mixture(rng)

        class Opaque:
            dim = mix.dim
            def logpdf(self, x): return mix.logpdf(x)
            def pdf(self, x): return mix.pdf(x)
            def log_hessian(self, x): return mix.log_hessian(x)
            def log_gradient(self, x): return mix.log_gradient(x)
            def gradient(self, x): return mix.gradient(x)
            def hessian(self, x): return mix.hessian(x)
            def covariance(self): return mix.covariance()

        cfg = AdaptationConfig(tol=1e-12, quad_nodes=40)
        x = np.array([0.5, 0.3])
        closed = mu_fixed_point(mix, x, AdaptationConfig(tol=1e-12))
        quadr = mu_fixed_point(DensityAccess.from_analytic(Opaque()), x, cfg)
        rel = np.linalg.norm(closed.mu_squared - quadr.mu_squared) / np.linalg.norm(
            closed.mu_squared
        )
        assert rel < 1e-8

    def test_banana_self_consistency_by_adaptive_quadrature(self):
        # independent oracle: at the converged mu, re-evaluate both smoothing
        # convolutions with scipy adaptive quadrature and check the ratio.
        b = banana_density()
        access = DensityAccess.from_analytic(b)
        cfg = AdaptationConfig(tol=1e-11, quad_nodes=32)
        x = np.array([2.0, 1.0])
        res = mu_fixed_point(access, x, cfg)
        assert res.converged

        lam2 = cfg.lam**2
        smooth_cov = np.linalg.inv(2.0 * lam2 * res.mu_squared)
        inv_sc = np.linalg.inv(smooth_cov)
        norm = 1.0 / (2 * np.pi * np.sqrt(np.linalg.det(smooth_cov)))

        def weight(t1, t2):
            r = np.array([t1, t2]) - x
            return norm * np.exp(-0.5 * r @ inv_sc @ r)

        def num_entry(i, j):
            def integrand(t2, t1):
                t = np.array([t1, t2])
                rho = b.pdf(t)
                g = b.gradient(t)
                h = b.hessian(t)
                return (g[i] * g[j] - rho * h[i, j]) * weight(t1, t2)
            return dblquad(integrand, x[0] - 12, x[0] + 12, x[1] - 12, x[1] + 12,
                           epsabs=1e-12, epsrel=1e-9)[0]

        def den():
            def integrand(t2, t1):
                return b.pdf(np.array([t1, t2])) ** 2 * weight(t1, t2)
            return dblquad(integrand, x[0] - 12, x[0] + 12, x[1] - 12, x[1] + 12,
                           epsabs=1e-12, epsrel=1e-9)[0]

        d = den()
        ratio = np.array([[num_entry(0, 0), num_entry(0, 1)],
                          [num_entry(0, 1), num_entry(1, 1)]]) / ((2 - lam2) * d)
        rel = np.linalg.norm(ratio - res.mu_squared) / np.linalg.norm(res.mu_squared)
        assert rel < 1e-5


class TestConfigValidation:
    def test_lambda_range(self):
        with pytest.raises(DomainError):
            AdaptationConfig(lam=1.5)
        with pytest.raises(DomainError):
            AdaptationConfig(lam=0.0)

    def test_damping_range(self):
        with pytest.raises(DomainError):
            AdaptationConfig(damping=0.0)

    def test_missing_initializer(self):
        class Bare:
            dim = 2
            def logpdf(self, x): return np.zeros(len(np.atleast_2d(x)))
            def log_hessian(self, x): return np.zeros((len(np.atleast_2d(x)), 2, 2))

        with pytest.raises(DomainError, match="initializer"):
            mu_fixed_point(DensityAccess(Bare()), np.zeros(2), AdaptationConfig())
