"""Mixture estimates, analytic derivatives, and the banana reference density."""

import numpy as np
import pytest
from scipy.integrate import quad

from vkde.density import (
    BananaDensity,
    DensityAccess,
    GaussianMixture,
    KernelSpec,
    SampleSet,
    VkdeEstimate,
    banana_density,
    demo_mixture_1d,
    mm_delta4,
    mm_eval,
    mm_gradient,
    mm_hessian,
)
from vkde.evaluation import QuadratureGrid
from vkde.exceptions import DomainError
from vkde.gauss import sqrt_spd

from conftest import random_gl, random_spd


def fd_gradient(f, x, step):
    d = len(x)
    out = np.zeros(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        out[i] = (f(x + e) - f(x - e)) / (2 * step)
    return out


def fd_hessian(f, x, step):
    d = len(x)
    out = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = step
            ej[j] = step
            out[i, j] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * step**2)
    return out


def random_estimate(rng, n=6, d=2):
    pts = rng.normal(size=(n, d), scale=1.5)
    bws = np.stack([sqrt_spd(random_spd(rng, d, scale=0.5)) for _ in range(n)])
    return VkdeEstimate(SampleSet(pts), bws)


class TestMmEval:
    def test_single_standard_kernel_peak(self):
        est = VkdeEstimate(SampleSet(np.zeros((1, 2))), np.eye(2))
        assert mm_eval(est, np.zeros(2)) == pytest.approx(1.0 / (2 * np.pi), rel=1e-12)

    def test_normalization_by_quadrature(self, rng):
        est = random_estimate(rng)
        grid = QuadratureGrid(((-12, 12, 240), (-12, 12, 240)))
        mass = float(grid.weights @ est.pdf(grid.points))
        assert mass == pytest.approx(1.0, abs=1e-3)

    def test_shift_equivariance(self, rng):
        est = random_estimate(rng)
        a = rng.normal(size=2, scale=3.0)
        shifted = VkdeEstimate(SampleSet(est.samples.points + a), est.bandwidths)
        x = rng.normal(size=2)
        assert shifted.pdf(x + a) == pytest.approx(est.pdf(x), rel=1e-12)

    def test_affine_equivariance(self, rng):
        # bandwidths mapped through h3 h3^T = A^{-1} h1 h1^T A^{-T} must give
        # rho3(x) = |det A| rho1(A x) to 1e-10 relative.
        for _ in range(8):
            est = random_estimate(rng)
            a_mat = random_gl(rng, 2)
            ainv = np.linalg.inv(a_mat)
            new_bw = np.stack([
                sqrt_spd(ainv @ (h @ h.T) @ ainv.T) for h in est.bandwidths
            ])
            est3 = VkdeEstimate(SampleSet(est.samples.points @ ainv.T), new_bw)
            x = rng.normal(size=2)
            lhs = est3.pdf(x)
            rhs = abs(np.linalg.det(a_mat)) * est.pdf(a_mat @ x)
            assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_singular_bandwidth_names_index(self):
        bws = np.stack([np.eye(2), np.zeros((2, 2))])
        with pytest.raises(DomainError, match="index 1"):
            VkdeEstimate(SampleSet(np.zeros((2, 2))), bws)

    def test_generic_radial_kernel_matches_gaussian(self, rng):
        # A radial KernelSpec whose profile is the Gaussian must agree with
        # the closed-form mixture path.
        est = random_estimate(rng, n=4)
        gamma = KernelSpec.standard_gaussian(2).gamma
        radial = KernelSpec(gamma=gamma, gaussian=False, dim=2)
        est_radial = VkdeEstimate(est.samples, est.bandwidths, kernel=radial)
        x = rng.normal(size=(5, 2))
        assert np.allclose(est_radial.pdf(x), est.pdf(x), rtol=1e-12)

    def test_radial_kernel_unit_mass(self):
        edge = np.sqrt(3.0)
        for dim in (1, 2):
            k = KernelSpec.uniform(dim)
            if dim == 1:
                mass = quad(lambda t: k.gamma(np.array([t * t]))[0], -3, 3, points=[-edge, edge])[0]
            else:
                # polar integration of gamma(r^2)
                mass = quad(lambda r: 2 * np.pi * r * k.gamma(np.array([r * r]))[0], 0, 3,
                            points=[edge])[0]
            assert mass == pytest.approx(1.0, abs=1e-10)

    def test_derivatives_require_gaussian(self, rng):
        est = random_estimate(rng, n=3)
        radial = KernelSpec(gamma=KernelSpec.uniform(2).gamma, gaussian=False, dim=2)
        est_u = VkdeEstimate(est.samples, est.bandwidths, kernel=radial)
        with pytest.raises(DomainError, match="Gaussian"):
            est_u.gradient(np.zeros(2))


class TestDerivatives:
    def test_gradient_zero_at_symmetric_center(self):
        pts = np.array([[1.0, 0.0], [-1.0, 0.0]])
        est = VkdeEstimate(SampleSet(pts), np.broadcast_to(np.eye(2), (2, 2, 2)).copy())
        assert np.allclose(mm_gradient(est, np.zeros(2)), 0.0, atol=1e-15)

    def test_gradient_matches_finite_differences(self, rng):
        est = random_estimate(rng)
        for _ in range(5):
            x = rng.normal(size=2)
            fd = fd_gradient(lambda z: est.pdf(z), x, 1e-5)
            assert np.allclose(mm_gradient(est, x), fd, rtol=1e-6, atol=1e-12)

    def test_hessian_matches_finite_differences(self, rng):
        est = random_estimate(rng)
        for _ in range(5):
            x = rng.normal(size=2)
            fd = fd_hessian(lambda z: est.pdf(z), x, 1e-4)
            hess = mm_hessian(est, x)
            assert np.allclose(hess, hess.T)
            assert np.allclose(hess, fd, rtol=1e-4, atol=1e-10)

    def test_hessian_single_kernel_curvature(self):
        # standard normal in 1-D: rho''(0) = -(2 pi)^{-1/2}
        est = VkdeEstimate(SampleSet(np.zeros((1, 1))), np.eye(1))
        assert mm_hessian(est, np.zeros(1))[0, 0] == pytest.approx(
            -((2 * np.pi) ** -0.5), rel=1e-12
        )

    def test_log_derivatives_consistent(self, rng):
        est = random_estimate(rng)
        x = rng.normal(size=2)
        rho = est.pdf(x)
        g = est.gradient(x)
        h = est.hessian(x)
        assert np.allclose(est.log_gradient(x), g / rho, rtol=1e-10)
        expected = h / rho - np.outer(g, g) / rho**2
        assert np.allclose(est.log_hessian(x), expected, rtol=1e-9, atol=1e-12)


class TestDelta4:
    def test_univariate_closed_form(self):
        # d=1: Delta4 = 3 rho'''' h^4 with rho''''(0) = 3 (2 pi)^{-1/2}
        est = VkdeEstimate(SampleSet(np.zeros((1, 1))), np.eye(1))
        h = np.array([[0.7]])
        expected = 3 * (3 / np.sqrt(2 * np.pi)) * 0.7**4
        assert mm_delta4(est, np.zeros(1), h) == pytest.approx(expected, rel=1e-12)

    def test_zero_matrix(self, rng):
        est = random_estimate(rng)
        assert mm_delta4(est, np.zeros(2), np.zeros((2, 2))) == 0.0

    def test_matches_nested_finite_differences(self, rng):
        est = random_estimate(rng, n=3)
        h = sqrt_spd(random_spd(rng, 2, scale=0.4))
        m = h @ h
        x = rng.normal(size=2, scale=0.5)
        step = 1e-2

        def quartic_fd():
            total = 0.0
            for i in range(2):
                for j in range(2):
                    for k in range(2):
                        for l in range(2):
                            def d4(z, axes=(i, j, k, l)):
                                f = lambda w: est.pdf(w)
                                for ax in axes:
                                    f = (lambda g, a: lambda w: (
                                        g(w + step * np.eye(2)[a]) - g(w - step * np.eye(2)[a])
                                    ) / (2 * step))(f, ax)
                                return f(z)
                            total += d4(x) * m[i, j] * m[k, l]
            return 3 * total

        assert mm_delta4(est, x, h) == pytest.approx(quartic_fd(), rel=1e-3)

    def test_sign_invariance_under_h_negation(self, rng):
        est = random_estimate(rng, n=3)
        h = random_gl(rng, 2)
        x = rng.normal(size=2)
        assert mm_delta4(est, x, h) == pytest.approx(mm_delta4(est, x, -h), rel=1e-12)


class TestBanana:
    def test_peak_value(self):
        b = banana_density()
        assert b.pdf(np.zeros(2)) == pytest.approx(1.0 / (2 * np.pi * 5.0), rel=1e-12)
        assert b.pdf(np.zeros(2)) == pytest.approx(0.031831, abs=5e-7)

    def test_x2_partial_vanishes_at_origin(self):
        b = banana_density()
        assert b.gradient(np.zeros(2))[1] == pytest.approx(0.0, abs=1e-15)

    def test_gradient_matches_finite_differences(self, rng):
        b = banana_density()
        for _ in range(20):
            x = rng.normal(size=2, scale=4.0)
            fd = fd_gradient(lambda z: b.pdf(z), x, 1e-5)
            assert np.allclose(b.gradient(x), fd, rtol=1e-6, atol=1e-12)

    def test_hessian_matches_finite_differences(self, rng):
        b = banana_density()
        for _ in range(5):
            x = rng.normal(size=2, scale=3.0)
            fd = fd_hessian(lambda z: b.pdf(z), x, 1e-4)
            assert np.allclose(b.hessian(x), fd, rtol=1e-4, atol=1e-10)

    def test_log_hessian_against_published_numerator(self, rng):
        # grad rho grad rho^T - rho D^2 rho must equal rho^2 (-D^2 log rho);
        # closed polynomial form cross-checked against the sympy derivatives.
        b = banana_density()
        for _ in range(10):
            x = rng.normal(size=2, scale=3.0)
            rho = b.pdf(x)
            g = b.gradient(x)
            h = b.hessian(x)
            lhs = np.outer(g, g) - rho * h
            rhs = -(rho**2) * b.log_hessian(x)
            assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-18)

    def test_quartic_contraction_vs_finite_differences(self, rng):
        b = banana_density()
        m = np.array([[0.5, 0.1], [0.1, 0.3]])
        x = np.array([2.0, 1.0])
        step = 5e-3

        def d4_entry(i, j, k, l):
            f = lambda w: b.pdf(w)
            for ax in (i, j, k, l):
                f = (lambda g, a: lambda w: (
                    g(w + step * np.eye(2)[a]) - g(w - step * np.eye(2)[a])
                ) / (2 * step))(f, ax)
            return f(x)

        total = sum(
            d4_entry(i, j, k, l) * m[i, j] * m[k, l]
            for i in range(2) for j in range(2) for k in range(2) for l in range(2)
        )
        assert b.quartic_contraction(x, m) == pytest.approx(total, rel=1e-3)

    def test_covariance_moments(self):
        b = banana_density()
        cov = b.covariance()
        assert cov[0, 0] == pytest.approx(25.0)
        assert cov[1, 1] == pytest.approx(33.0)

    def test_invalid_sigma(self):
        with pytest.raises(DomainError):
            BananaDensity(sigma=0.0)


class TestSampleSet:
    def test_requires_points(self):
        with pytest.raises(DomainError):
            SampleSet(np.zeros((0, 2)))

    def test_one_dimensional_promotion(self):
        s = SampleSet(np.array([1.0, 2.0, 3.0]))
        assert s.points.shape == (3, 1)


class TestDensityAccess:
    def test_scaling_applies_to_values_not_mu_path(self, rng):
        mix = demo_mixture_1d()
        access = DensityAccess.from_analytic(mix)
        scaled = access.scaled(3.0)
        x = np.array([0.5])
        assert scaled.value(x) == pytest.approx(3.0 * access.value(x), rel=1e-14)
        assert scaled.mixture is access.mixture

    def test_estimate_access_exposes_mixture(self, rng):
        est = random_estimate(rng)
        access = DensityAccess.from_estimate(est)
        assert access.mixture is est.mixture
        assert access.mu_init_squared is not None
