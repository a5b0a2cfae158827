"""Mixture-model density estimates and analytic reference densities.

The central object is :class:`GaussianMixture`, a weighted Gaussian mixture
with analytic derivatives up to the fourth-order contraction needed by the
multivariate Parzen rule. :class:`VkdeEstimate` (the sample-point estimator
with per-sample bandwidth matrices) wraps one when the kernel is Gaussian;
:class:`BananaDensity` is the curved benchmark truth with machine-generated
derivatives. :class:`DensityAccess` gives every bandwidth selector one uniform
value/derivative interface over either backing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .exceptions import DomainError
from .gauss import LOG_2PI, inv_spd, spd_cholesky, symmetrize


def _as_points(x: np.ndarray, dim: int) -> tuple[np.ndarray, bool]:
    """Normalize x to shape (M, dim); second value tells if input was a single point."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.size != dim:
            raise DomainError(f"point dimension {x.size} does not match density dimension {dim}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != dim:
        raise DomainError(f"expected points of shape (M, {dim}), got {x.shape}")
    return x, False


@dataclass(frozen=True)
class KernelSpec:
    """Radially symmetric kernel K(x) = gamma(||x||^2) in ``dim`` dimensions.

    ``gamma`` must integrate to a unit-mass kernel (checked by quadrature in
    the tests, not at runtime). ``support_radius`` marks compact support so
    quadrature-based constants can split the domain.
    """

    gamma: Callable[[np.ndarray], np.ndarray]
    gaussian: bool
    dim: int
    support_radius: Optional[float] = None

    @classmethod
    def standard_gaussian(cls, dim: int) -> "KernelSpec":
        norm = (2.0 * np.pi) ** (-dim / 2.0)

        def gamma(s: np.ndarray) -> np.ndarray:
            return norm * np.exp(-0.5 * np.asarray(s, dtype=float))

        return cls(gamma=gamma, gaussian=True, dim=dim)

    @classmethod
    def uniform(cls, dim: int, radius: float = math.sqrt(3.0)) -> "KernelSpec":
        """Uniform kernel on the ball of the given radius (unit variance for d=1)."""
        if dim == 1:
            volume = 2.0 * radius
        else:
            volume = (np.pi ** (dim / 2.0)) / math.gamma(dim / 2.0 + 1.0) * radius**dim
        height = 1.0 / volume
        r2 = radius * radius

        def gamma(s: np.ndarray) -> np.ndarray:
            s = np.asarray(s, dtype=float)
            return np.where(s <= r2, height, 0.0)

        return cls(gamma=gamma, gaussian=False, dim=dim, support_radius=radius)


@dataclass(frozen=True)
class SampleSet:
    """Ordered d-dimensional sample locations; order is index-aligned with bandwidths."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise DomainError("SampleSet requires at least one point of shape (N, d)")
        if not np.all(np.isfinite(pts)):
            raise DomainError("SampleSet contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def shifted(self, a: np.ndarray) -> "SampleSet":
        return SampleSet(self.points + np.asarray(a, dtype=float)[None, :])

    def covariance(self) -> np.ndarray:
        """Sample covariance (ddof=1 when N > 1, population otherwise)."""
        pts = self.points
        if pts.shape[0] == 1:
            return np.eye(pts.shape[1])
        return np.atleast_2d(np.cov(pts, rowvar=False, ddof=1))


class GaussianMixture:
    """Weighted Gaussian mixture with analytic derivatives.

    Serves both as an analytic reference density and as the evaluation engine
    behind Gaussian-kernel VKDE estimates. All evaluators are vectorized over
    points and stable in log space.
    """

    def __init__(self, means, covs, weights=None):
        means = np.asarray(means, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        n, d = means.shape
        covs = np.asarray(covs, dtype=float)
        if covs.ndim == 2:
            covs = np.broadcast_to(covs, (n, d, d)).copy()
        if covs.shape != (n, d, d):
            raise DomainError(f"covariances must have shape ({n}, {d}, {d}), got {covs.shape}")
        if weights is None:
            weights = np.full(n, 1.0 / n)
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n,) or np.any(weights <= 0):
            raise DomainError("mixture weights must be positive, shape (n,)")
        weights = weights / weights.sum()

        self.means = means
        self.covs = covs
        self.weights = weights
        self.n = n
        self.dim = d

        try:
            chols = np.linalg.cholesky(covs)
        except np.linalg.LinAlgError as exc:
            bad = [i for i in range(n) if np.linalg.eigvalsh(symmetrize(covs[i]))[0] <= 0]
            raise DomainError(f"component covariance not SPD at indices {bad}") from exc
        self._logdets = 2.0 * np.sum(np.log(np.diagonal(chols, axis1=1, axis2=2)), axis=1)
        self.precisions = np.stack([inv_spd(c) for c in covs])
        self._logw = np.log(weights)
        self._lognorm = self._logw - 0.5 * (d * LOG_2PI + self._logdets)

    # ------------------------------------------------------------------
    # evaluation

    def _log_components(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-component log densities (M, n) and precision-weighted residuals (M, n, d)."""
        diff = pts[:, None, :] - self.means[None, :, :]
        pr = np.einsum("nij,mnj->mni", self.precisions, diff)
        quad = np.einsum("mni,mni->mn", diff, pr)
        return self._lognorm[None, :] - 0.5 * quad, pr

    def logpdf(self, x: np.ndarray):
        pts, single = _as_points(x, self.dim)
        logc, _ = self._log_components(pts)
        top = logc.max(axis=1)
        out = top + np.log(np.sum(np.exp(logc - top[:, None]), axis=1))
        return float(out[0]) if single else out

    def pdf(self, x: np.ndarray):
        pts, single = _as_points(x, self.dim)
        logc, _ = self._log_components(pts)
        out = np.sum(np.exp(logc), axis=1)
        return float(out[0]) if single else out

    def gradient(self, x: np.ndarray):
        pts, single = _as_points(x, self.dim)
        logc, pr = self._log_components(pts)
        t = np.exp(logc)
        out = -np.einsum("mn,mni->mi", t, pr)
        return out[0] if single else out

    def hessian(self, x: np.ndarray):
        pts, single = _as_points(x, self.dim)
        logc, pr = self._log_components(pts)
        t = np.exp(logc)
        out = np.einsum("mn,mni,mnj->mij", t, pr, pr) - np.einsum("mn,nij->mij", t, self.precisions)
        out = 0.5 * (out + np.swapaxes(out, 1, 2))
        return out[0] if single else out

    def log_gradient(self, x: np.ndarray):
        """Gradient of log density, stable for far-out points."""
        pts, single = _as_points(x, self.dim)
        logc, pr = self._log_components(pts)
        s = np.exp(logc - logc.max(axis=1, keepdims=True))
        s /= s.sum(axis=1, keepdims=True)
        out = -np.einsum("mn,mni->mi", s, pr)
        return out[0] if single else out

    def log_hessian(self, x: np.ndarray):
        """Hessian of log density: sum_n s_n (u u^T - P_n) - u-bar u-bar^T."""
        pts, single = _as_points(x, self.dim)
        logc, pr = self._log_components(pts)
        s = np.exp(logc - logc.max(axis=1, keepdims=True))
        s /= s.sum(axis=1, keepdims=True)
        ubar = -np.einsum("mn,mni->mi", s, pr)
        out = (
            np.einsum("mn,mni,mnj->mij", s, pr, pr)
            - np.einsum("mn,nij->mij", s, self.precisions)
            - np.einsum("mi,mj->mij", ubar, ubar)
        )
        out = 0.5 * (out + np.swapaxes(out, 1, 2))
        return out[0] if single else out

    def quartic_contraction(self, x: np.ndarray, m: np.ndarray):
        """sum_{ijkl} (d^4 rho / dx_i dx_j dx_k dx_l)(x) m_ij m_kl for symmetric m."""
        pts, single = _as_points(x, self.dim)
        m = np.atleast_2d(np.asarray(m, dtype=float))
        logc, pr = self._log_components(pts)
        t = np.exp(logc)
        pm = np.einsum("nij,jk->nik", self.precisions, m)
        tr_pm = np.trace(pm, axis1=1, axis2=2)
        tr_pmpm = np.einsum("nij,nji->n", pm, pm)
        mpm = np.einsum("ij,njk->nik", m, pm)
        vmv = np.einsum("mni,ij,mnj->mn", pr, m, pr)
        vmpmv = np.einsum("mni,nij,mnj->mn", pr, mpm, pr)
        poly = (
            vmv**2
            - 2.0 * tr_pm[None, :] * vmv
            - 4.0 * vmpmv
            + (tr_pm**2 + 2.0 * tr_pmpm)[None, :]
        )
        out = np.einsum("mn,mn->m", t, poly)
        return float(out[0]) if single else out

    def delta4(self, x: np.ndarray, h: np.ndarray):
        """Fourth-derivative contraction against the entries of h@h (3x the quartic)."""
        h = np.atleast_2d(np.asarray(h, dtype=float))
        return 3.0 * self.quartic_contraction(x, h @ h)

    # ------------------------------------------------------------------
    # moments and exact transforms (used heavily by the invariance tests)

    def covariance(self) -> np.ndarray:
        mean = self.weights @ self.means
        second = np.einsum("n,nij->ij", self.weights, self.covs)
        second += np.einsum("n,ni,nj->ij", self.weights, self.means, self.means)
        return symmetrize(second - np.outer(mean, mean))

    def shifted(self, a: np.ndarray) -> "GaussianMixture":
        a = np.asarray(a, dtype=float)
        return GaussianMixture(self.means + a[None, :], self.covs, self.weights)

    def affine_image(self, a_mat: np.ndarray) -> "GaussianMixture":
        """The density |det A| rho(A x), i.e. the law of A^{-1} X."""
        a_mat = np.asarray(a_mat, dtype=float)
        ainv = np.linalg.inv(a_mat)
        means = self.means @ ainv.T
        covs = np.einsum("ij,njk,lk->nil", ainv, self.covs, ainv)
        covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
        return GaussianMixture(means, covs, self.weights)

    def combine(self, others, weights) -> "GaussianMixture":
        """Convex combination of this mixture with others under the given weights."""
        parts = [self, *others]
        weights = np.asarray(weights, dtype=float)
        means = np.concatenate([p.means for p in parts])
        covs = np.concatenate([p.covs for p in parts])
        w = np.concatenate([wk * p.weights for wk, p in zip(weights, parts)])
        return GaussianMixture(means, covs, w)


class VkdeEstimate:
    """Sample-point estimator: mean of per-sample stretched/rotated kernels.

    ``bandwidths`` is an (N, d, d) stack of invertible matrices; with a
    Gaussian kernel the component covariances are h_n h_n^T and all analytic
    derivatives are available through the wrapped mixture.
    """

    def __init__(self, samples: SampleSet, bandwidths: np.ndarray, kernel: Optional[KernelSpec] = None):
        if not isinstance(samples, SampleSet):
            samples = SampleSet(samples)
        bw = np.asarray(bandwidths, dtype=float)
        if bw.ndim == 2:
            bw = np.broadcast_to(bw, (samples.n, *bw.shape)).copy()
        if bw.shape != (samples.n, samples.dim, samples.dim):
            raise DomainError(
                f"bandwidths must have shape ({samples.n}, {samples.dim}, {samples.dim}), got {bw.shape}"
            )
        dets = np.linalg.det(bw)
        bad = np.flatnonzero(~(np.abs(dets) > 0) | ~np.isfinite(dets))
        if bad.size:
            raise DomainError(f"singular bandwidth matrix at sample index {int(bad[0])}")
        kernel = kernel or KernelSpec.standard_gaussian(samples.dim)
        if kernel.dim != samples.dim:
            raise DomainError("kernel dimension does not match samples")

        self.samples = samples
        self.bandwidths = bw
        self.kernel = kernel
        self.n = samples.n
        self.dim = samples.dim

        if kernel.gaussian:
            covs = np.einsum("nij,nkj->nik", bw, bw)
            try:
                self.mixture: Optional[GaussianMixture] = GaussianMixture(samples.points, covs)
            except DomainError as exc:
                raise DomainError(f"bandwidths yield non-SPD kernel covariances: {exc}") from exc
        else:
            self.mixture = None
            self._inv_bw = np.linalg.inv(bw)
            self._absdet = np.abs(dets)

    def pdf(self, x: np.ndarray):
        if self.mixture is not None:
            return self.mixture.pdf(x)
        pts, single = _as_points(x, self.dim)
        diff = pts[:, None, :] - self.samples.points[None, :, :]
        u = np.einsum("nij,mnj->mni", self._inv_bw, diff)
        s = np.einsum("mni,mni->mn", u, u)
        vals = self.kernel.gamma(s) / self._absdet[None, :]
        out = vals.mean(axis=1)
        return float(out[0]) if single else out

    def logpdf(self, x: np.ndarray):
        self._require_gaussian("logpdf")
        return self.mixture.logpdf(x)

    def gradient(self, x: np.ndarray):
        self._require_gaussian("gradient")
        return self.mixture.gradient(x)

    def hessian(self, x: np.ndarray):
        self._require_gaussian("hessian")
        return self.mixture.hessian(x)

    def log_gradient(self, x: np.ndarray):
        self._require_gaussian("log_gradient")
        return self.mixture.log_gradient(x)

    def log_hessian(self, x: np.ndarray):
        self._require_gaussian("log_hessian")
        return self.mixture.log_hessian(x)

    def quartic_contraction(self, x: np.ndarray, m: np.ndarray):
        self._require_gaussian("quartic_contraction")
        return self.mixture.quartic_contraction(x, m)

    def delta4(self, x: np.ndarray, h: np.ndarray):
        self._require_gaussian("delta4")
        return self.mixture.delta4(x, h)

    def covariance(self) -> np.ndarray:
        return self.samples.covariance()

    def _require_gaussian(self, what: str) -> None:
        if self.mixture is None:
            raise DomainError(f"{what} requires a Gaussian kernel")


# ----------------------------------------------------------------------
# functional surface over VkdeEstimate

def mm_eval(est: VkdeEstimate, x: np.ndarray):
    """Evaluate the mixture-model estimate at x."""
    return est.pdf(x)


def mm_gradient(est: VkdeEstimate, x: np.ndarray):
    return est.gradient(x)


def mm_hessian(est: VkdeEstimate, x: np.ndarray):
    return est.hessian(x)


def mm_delta4(est: VkdeEstimate, x: np.ndarray, h: np.ndarray):
    return est.delta4(x, h)


# ----------------------------------------------------------------------
# analytic reference densities

@lru_cache(maxsize=8)
def _banana_derivative_tables(alpha: float, sigma: float):
    """sympy-generated partial derivatives of the banana density, orders 1, 2 and 4."""
    import sympy as sp

    x1, x2 = sp.symbols("x1 x2", real=True)
    u = x1 / sigma
    expr = sp.exp(-(u**2 + (x2 - alpha * u**2) ** 2) / 2) / (2 * sp.pi * sigma)

    def table(order: int):
        out = {}
        for n1 in range(order + 1):
            n2 = order - n1
            deriv = sp.diff(expr, x1, n1, x2, n2)
            out[(n1, n2)] = sp.lambdify((x1, x2), deriv, modules="numpy")
        return out

    return table(1), table(2), table(4)


class BananaDensity:
    """The curved benchmark density: Gaussian in x1, Gaussian ridge in x2.

    pdf(x) = (2 pi sigma)^{-1} exp(-[ (x1/sigma)^2 + (x2 - alpha (x1/sigma)^2)^2 ] / 2)
    """

    dim = 2

    def __init__(self, alpha: float = 4.0, sigma: float = 5.0):
        if sigma <= 0:
            raise DomainError("sigma must be positive")
        self.alpha = float(alpha)
        self.sigma = float(sigma)
        self._d1, self._d2, self._d4 = _banana_derivative_tables(self.alpha, self.sigma)

    def _uv(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        u = pts[:, 0] / self.sigma
        r = pts[:, 1] - self.alpha * u**2
        return u, r

    def logpdf(self, x: np.ndarray):
        pts, single = _as_points(x, 2)
        u, r = self._uv(pts)
        out = -np.log(2.0 * np.pi * self.sigma) - 0.5 * (u**2 + r**2)
        return float(out[0]) if single else out

    def pdf(self, x: np.ndarray):
        pts, single = _as_points(x, 2)
        out = np.exp(self.logpdf(pts))
        return float(out[0]) if single else out

    def gradient(self, x: np.ndarray):
        pts, single = _as_points(x, 2)
        out = np.stack(
            [np.broadcast_to(self._d1[idx](pts[:, 0], pts[:, 1]), pts.shape[0]) for idx in ((1, 0), (0, 1))],
            axis=1,
        ).astype(float)
        return out[0] if single else out

    def hessian(self, x: np.ndarray):
        pts, single = _as_points(x, 2)
        h11 = self._d2[(2, 0)](pts[:, 0], pts[:, 1])
        h12 = self._d2[(1, 1)](pts[:, 0], pts[:, 1])
        h22 = self._d2[(0, 2)](pts[:, 0], pts[:, 1])
        out = np.empty((pts.shape[0], 2, 2))
        out[:, 0, 0] = h11
        out[:, 0, 1] = out[:, 1, 0] = h12
        out[:, 1, 1] = h22
        return out[0] if single else out

    def log_gradient(self, x: np.ndarray):
        pts, single = _as_points(x, 2)
        u, r = self._uv(pts)
        a, s = self.alpha, self.sigma
        out = np.stack([(-u + 2.0 * a * u * r) / s, -r], axis=1)
        return out[0] if single else out

    def log_hessian(self, x: np.ndarray):
        pts, single = _as_points(x, 2)
        u, r = self._uv(pts)
        a, s = self.alpha, self.sigma
        out = np.empty((pts.shape[0], 2, 2))
        out[:, 0, 0] = (-1.0 + 2.0 * a * r - 4.0 * a**2 * u**2) / s**2
        out[:, 0, 1] = out[:, 1, 0] = 2.0 * a * u / s
        out[:, 1, 1] = -1.0
        return out[0] if single else out

    def quartic_contraction(self, x: np.ndarray, m: np.ndarray):
        pts, single = _as_points(x, 2)
        m = np.atleast_2d(np.asarray(m, dtype=float))
        vals = {
            key: np.broadcast_to(fn(pts[:, 0], pts[:, 1]), pts.shape[0]).astype(float)
            for key, fn in self._d4.items()
        }
        out = np.zeros(pts.shape[0])
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    for l in range(2):
                        n1 = (i == 0) + (j == 0) + (k == 0) + (l == 0)
                        out += vals[(n1, 4 - n1)] * m[i, j] * m[k, l]
        return float(out[0]) if single else out

    def delta4(self, x: np.ndarray, h: np.ndarray):
        h = np.atleast_2d(np.asarray(h, dtype=float))
        return 3.0 * self.quartic_contraction(x, h @ h)

    def covariance(self) -> np.ndarray:
        # Var(x1) = sigma^2, Var(x2) = 2 alpha^2 + 1, cross terms vanish by symmetry.
        return np.diag([self.sigma**2, 2.0 * self.alpha**2 + 1.0])


def banana_density(alpha: float = 4.0, sigma: float = 5.0) -> BananaDensity:
    """Construct the benchmark banana density (defaults match the experiments)."""
    return BananaDensity(alpha=alpha, sigma=sigma)


def demo_mixture_1d() -> GaussianMixture:
    """Stand-in for the 1-D demonstration density: one flat and one peaked
    Gaussian component (the published 1-D figures never state their density)."""
    means = np.array([[-1.0], [2.0]])
    covs = np.array([[[4.0]], [[0.0625]]])
    return GaussianMixture(means, covs, np.array([2.0 / 3.0, 1.0 / 3.0]))


class AffineImageDensity:
    """The density |det A| rho(A x + b) for a generic analytic base density.

    Realizes both shifts (A = I, b = -a gives rho(x - a)) and the matrix
    scaling used by the invariance checks. Derivatives follow by chain rule.
    """

    def __init__(self, base, a_mat: Optional[np.ndarray] = None, shift: Optional[np.ndarray] = None):
        self.base = base
        d = base.dim
        self.dim = d
        self.a_mat = np.eye(d) if a_mat is None else np.asarray(a_mat, dtype=float)
        self.shift = np.zeros(d) if shift is None else np.asarray(shift, dtype=float)
        self._absdet = abs(float(np.linalg.det(self.a_mat)))
        if self._absdet == 0.0:
            raise DomainError("affine image requires an invertible matrix")

    def _map(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.a_mat.T + self.shift[None, :]

    def pdf(self, x: np.ndarray):
        pts, single = _as_points(x, self.dim)
        out = self._absdet * np.atleast_1d(self.base.pdf(self._map(pts)))
        return float(out[0]) if single else out

    def logpdf(self, x: np.ndarray):
        pts, single = _as_points(x, self.dim)
        out = np.log(self._absdet) + np.atleast_1d(self.base.logpdf(self._map(pts)))
        return float(out[0]) if single else out

    def gradient(self, x: np.ndarray):
        pts, single = _as_points(x, self.dim)
        g = np.atleast_2d(self.base.gradient(self._map(pts)))
        out = self._absdet * (g @ self.a_mat)
        return out[0] if single else out

    def hessian(self, x: np.ndarray):
        pts, single = _as_points(x, self.dim)
        h = self.base.hessian(self._map(pts))
        h = h[None, ...] if h.ndim == 2 else h
        out = self._absdet * np.einsum("ji,mjk,kl->mil", self.a_mat, h, self.a_mat)
        return out[0] if single else out

    def log_gradient(self, x: np.ndarray):
        pts, single = _as_points(x, self.dim)
        g = np.atleast_2d(self.base.log_gradient(self._map(pts)))
        out = g @ self.a_mat
        return out[0] if single else out

    def log_hessian(self, x: np.ndarray):
        pts, single = _as_points(x, self.dim)
        h = self.base.log_hessian(self._map(pts))
        h = h[None, ...] if h.ndim == 2 else h
        out = np.einsum("ji,mjk,kl->mil", self.a_mat, h, self.a_mat)
        return out[0] if single else out

    def quartic_contraction(self, x: np.ndarray, m: np.ndarray):
        pts, single = _as_points(x, self.dim)
        m = np.atleast_2d(np.asarray(m, dtype=float))
        m_img = self.a_mat @ m @ self.a_mat.T
        out = self._absdet * np.atleast_1d(self.base.quartic_contraction(self._map(pts), m_img))
        return float(out[0]) if single else out

    def delta4(self, x: np.ndarray, h: np.ndarray):
        h = np.atleast_2d(np.asarray(h, dtype=float))
        return 3.0 * self.quartic_contraction(x, h @ h)

    def covariance(self) -> np.ndarray:
        base_cov = self.base.covariance()
        ainv = np.linalg.inv(self.a_mat)
        return symmetrize(ainv @ base_cov @ ainv.T)


class DensityAccess:
    """Uniform density access for selectors: value, derivatives, and scaling.

    ``scale`` realizes the unnormalized multiple alpha * rho used by the
    scalar-multiplication invariance checks. When the backing density is (or
    wraps) a Gaussian mixture it is exposed via ``mixture`` so the adaptation
    solver can use the closed-form path.
    """

    def __init__(self, density, scale: float = 1.0, mu_init_squared: Optional[np.ndarray] = None):
        if scale <= 0:
            raise DomainError("density scale must be positive")
        self.density = density
        self.scale = float(scale)
        self._mu_init = None if mu_init_squared is None else np.asarray(mu_init_squared, dtype=float)

    @classmethod
    def from_estimate(cls, est: VkdeEstimate, scale: float = 1.0) -> "DensityAccess":
        mu_init = inv_spd(_regularized(est.samples.covariance()))
        return cls(est, scale=scale, mu_init_squared=mu_init)

    @classmethod
    def from_analytic(cls, density, scale: float = 1.0,
                      samples: Optional[SampleSet] = None) -> "DensityAccess":
        mu_init = None
        if samples is not None:
            mu_init = inv_spd(_regularized(samples.covariance()))
        elif hasattr(density, "covariance"):
            mu_init = inv_spd(_regularized(density.covariance()))
        return cls(density, scale=scale, mu_init_squared=mu_init)

    @property
    def dim(self) -> int:
        return self.density.dim

    @property
    def mixture(self) -> Optional[GaussianMixture]:
        if isinstance(self.density, GaussianMixture):
            return self.density
        return getattr(self.density, "mixture", None)

    @property
    def mu_init_squared(self) -> Optional[np.ndarray]:
        return self._mu_init

    def scaled(self, alpha: float) -> "DensityAccess":
        return DensityAccess(self.density, scale=self.scale * alpha, mu_init_squared=self._mu_init)

    def value(self, x: np.ndarray):
        return self.scale * self.density.pdf(x)

    def log_value(self, x: np.ndarray):
        return np.log(self.scale) + self.density.logpdf(x)

    def gradient(self, x: np.ndarray):
        return self.scale * self.density.gradient(x)

    def hessian(self, x: np.ndarray):
        return self.scale * self.density.hessian(x)

    def log_gradient(self, x: np.ndarray):
        return self.density.log_gradient(x)

    def log_hessian(self, x: np.ndarray):
        return self.density.log_hessian(x)

    def quartic_contraction(self, x: np.ndarray, m: np.ndarray):
        return self.scale * self.density.quartic_contraction(x, m)

    def delta4(self, x: np.ndarray, h: np.ndarray):
        return self.scale * self.density.delta4(x, h)


def _regularized(cov: np.ndarray) -> np.ndarray:
    """Guard a (possibly degenerate) covariance before inversion."""
    cov = symmetrize(np.asarray(cov, dtype=float))
    d = cov.shape[0]
    scale = max(float(np.trace(cov)) / d, 0.0)
    if scale <= 0.0:
        return np.eye(d)
    w = np.linalg.eigvalsh(cov)
    if w[0] <= 1e-10 * scale:
        cov = cov + (1e-10 * scale - min(w[0], 0.0)) * np.eye(d)
    return cov
