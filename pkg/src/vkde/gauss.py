"""Closed-form Gaussian algebra.

Exact evaluation of Gaussian densities, the convolution of a product of two
Gaussians with a *squared* Gaussian smoothing kernel, the matching
gradient/Hessian combination, and SPD matrix utilities. These closed forms are
the workhorses of the adaptation solver; every one of them is cross-checked
against adaptive quadrature of its defining integral in the test suite.

All evaluations go through log space before exponentiation so that products of
far-apart Gaussians underflow gracefully to 0.0 instead of degenerating to
NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import DomainError

LOG_2PI = float(np.log(2.0 * np.pi))
LOG_4PI = float(np.log(4.0 * np.pi))

# Relative eigenvalue floor used when clamping nearly-singular SPD matrices.
EIG_FLOOR_REL = 1e-12


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return the symmetric part (m + m^T)/2."""
    return 0.5 * (m + m.T)


def check_symmetric(m: np.ndarray, rtol: float = 1e-12, name: str = "matrix") -> None:
    scale = max(float(np.abs(m).max()), np.finfo(float).tiny)
    if float(np.abs(m - m.T).max()) > rtol * scale:
        raise DomainError(f"{name} is not symmetric to relative tolerance {rtol:g}")


def spd_cholesky(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Cholesky factor of an SPD matrix; DomainError when not SPD."""
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        eigs = np.linalg.eigvalsh(symmetrize(m))
        raise DomainError(f"{name} is not positive definite (eigenvalues {eigs})") from exc


def eig_floor(m: np.ndarray) -> float:
    """Relative eigenvalue floor for clamping: 1e-12 * trace(m)/d."""
    d = m.shape[0]
    return EIG_FLOOR_REL * float(np.trace(m)) / d


def clamp_spd(m: np.ndarray, name: str = "matrix") -> tuple[np.ndarray, bool]:
    """Symmetrize and clamp eigenvalues of ``m`` at the relative trace floor.

    Meant for matrices that are SPD up to rounding. Returns the clamped
    matrix and a flag telling whether any eigenvalue was raised; raises
    DomainError when the trace is nonpositive (no SPD repair possible).
    """
    ms = symmetrize(np.asarray(m, dtype=float))
    floor = eig_floor(ms)
    if not np.isfinite(floor) or floor <= 0.0:
        raise DomainError(
            f"{name} cannot be clamped to SPD: trace {np.trace(ms):g} is nonpositive "
            f"(eigenvalues {np.linalg.eigvalsh(ms)})"
        )
    w, v = np.linalg.eigh(ms)
    if w[0] >= floor:
        return ms, False
    w = np.maximum(w, floor)
    return symmetrize((v * w) @ v.T), True


def clamp_spd_lenient(m: np.ndarray, name: str = "matrix") -> tuple[np.ndarray, bool]:
    """Clamp with the floor taken relative to the largest positive eigenvalue.

    Salvages genuinely indefinite matrices (deep-tail adaptation ratios where
    the density-curvature term dominates) as long as one direction remains
    positive; raises DomainError only when no positive direction exists.
    """
    ms = symmetrize(np.asarray(m, dtype=float))
    w, v = np.linalg.eigh(ms)
    if not np.all(np.isfinite(w)) or w[-1] <= 0.0:
        raise DomainError(
            f"{name} cannot be clamped to SPD: no positive eigenvalue (eigenvalues {w})"
        )
    floor = EIG_FLOOR_REL * w[-1] / ms.shape[0]
    if w[0] >= floor:
        return ms, False
    w = np.maximum(w, floor)
    return symmetrize((v * w) @ v.T), True


def sqrt_spd(m: np.ndarray) -> np.ndarray:
    """Principal square root of an SPD matrix via eigendecomposition.

    Eigenvalues below the relative floor are clamped up to it; an
    indefinite matrix that cannot be repaired by clamping raises
    DomainError with the offending eigenvalues.
    """
    m = np.asarray(m, dtype=float)
    check_symmetric(m, name="sqrt_spd input")
    clamped, _ = clamp_spd(m, name="sqrt_spd input")
    w, v = np.linalg.eigh(clamped)
    return symmetrize((v * np.sqrt(w)) @ v.T)


def inv_spd(m: np.ndarray) -> np.ndarray:
    """Inverse of an SPD matrix through its Cholesky factor."""
    L = spd_cholesky(np.asarray(m, dtype=float), name="inv_spd input")
    identity = np.eye(m.shape[0])
    Linv = np.linalg.solve(L, identity)
    return symmetrize(Linv.T @ Linv)


@dataclass(frozen=True)
class GaussianComponent:
    """A Gaussian density with mean ``mean`` and SPD covariance ``cov``."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise DomainError(f"covariance shape {cov.shape} does not match dimension {mean.size}")
        check_symmetric(cov, name="covariance")
        spd_cholesky(cov, name="covariance")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def log_gauss(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """log of the Gaussian density with the given mean/covariance at x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.size
    L = spd_cholesky(cov, name="covariance")
    half = np.linalg.solve(L, x - mean)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return -0.5 * (d * LOG_2PI + logdet + float(half @ half))


def gauss_eval(g: GaussianComponent, x: np.ndarray) -> float:
    """Evaluate the Gaussian density ``g`` at ``x`` (log-space internally)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != g.dim:
        raise DomainError(f"point dimension {x.size} does not match component dimension {g.dim}")
    return float(np.exp(log_gauss(x, g.mean, g.cov)))


@dataclass(frozen=True)
class ConvolutionIntermediates:
    """Intermediate matrices of the squared-kernel convolution identities.

    ``q12``/``y12`` describe the product of the two Gaussians, ``q1234`` the
    posterior covariance after smoothing with the squared kernel, and
    ``alpha1``/``alpha2`` the x-dependent posterior-mean offsets entering the
    gradient/Hessian bracket.
    """

    q12: np.ndarray
    y12: np.ndarray
    q1234: np.ndarray
    alpha1: Callable[[np.ndarray], np.ndarray]
    alpha2: Callable[[np.ndarray], np.ndarray]
    # internal pieces reused by the evaluators
    _p1: np.ndarray = field(repr=False, default=None)
    _p2: np.ndarray = field(repr=False, default=None)
    _s12: np.ndarray = field(repr=False, default=None)
    _q3inv: np.ndarray = field(repr=False, default=None)


def convolution_intermediates(
    g1: GaussianComponent, g2: GaussianComponent, q3: np.ndarray
) -> ConvolutionIntermediates:
    """Precompute the shared matrices for the convolution closed forms."""
    q3 = np.atleast_2d(np.asarray(q3, dtype=float))
    p1 = inv_spd(g1.cov)
    p2 = inv_spd(g2.cov)
    q3inv = inv_spd(q3)
    q12 = inv_spd(p1 + p2)
    s12 = p1 @ g1.mean + p2 @ g2.mean  # equals q12^{-1} y12
    y12 = q12 @ s12
    q1234 = inv_spd(p1 + p2 + 2.0 * q3inv)

    def posterior_mean(x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return q1234 @ (s12 + 2.0 * q3inv @ x)

    def alpha1(x: np.ndarray) -> np.ndarray:
        return p1 @ (posterior_mean(x) - g1.mean)

    def alpha2(x: np.ndarray) -> np.ndarray:
        return p2 @ (posterior_mean(x) - g2.mean)

    return ConvolutionIntermediates(
        q12=q12, y12=y12, q1234=q1234, alpha1=alpha1, alpha2=alpha2,
        _p1=p1, _p2=p2, _s12=s12, _q3inv=q3inv,
    )


def _log_prefactor(
    g1: GaussianComponent,
    g2: GaussianComponent,
    q3: np.ndarray,
    inter: ConvolutionIntermediates,
    x: np.ndarray,
) -> float:
    d = g1.dim
    L3 = spd_cholesky(np.atleast_2d(np.asarray(q3, dtype=float)), name="smoothing covariance")
    logdet_q3 = 2.0 * float(np.sum(np.log(np.diag(L3))))
    sum_cov = g1.cov + g2.cov
    try:
        log_pair = log_gauss(g1.mean - g2.mean, np.zeros(d), sum_cov)
    except DomainError as exc:
        raise DomainError("singular covariance sum Q1 + Q2") from exc
    log_at_x = log_gauss(x, inter.y12, inter.q12 + 0.5 * np.atleast_2d(q3))
    return -0.5 * logdet_q3 - 0.5 * d * LOG_4PI + log_pair + log_at_x


def product_conv_sq(
    g1: GaussianComponent, g2: GaussianComponent, q3: np.ndarray, x: np.ndarray
) -> float:
    """(G_{y1,Q1} G_{y2,Q2}) convolved with the squared Gaussian of covariance q3, at x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    inter = convolution_intermediates(g1, g2, q3)
    return float(np.exp(_log_prefactor(g1, g2, q3, inter, x)))


def gradhess_conv_sq(
    g1: GaussianComponent, g2: GaussianComponent, q3: np.ndarray, x: np.ndarray
) -> np.ndarray:
    """(grad G1 grad G2^T - G1 D^2 G2) convolved with the squared Gaussian, at x.

    Closed form: the product_conv_sq prefactor times the bracket
    (P1 - P2) Q1234 P2 + (alpha1 - alpha2) alpha2^T + P2. The alpha2 factor in
    the outer product is required for agreement with the defining integral;
    see the quadrature cross-checks in the tests.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    inter = convolution_intermediates(g1, g2, q3)
    pref = np.exp(_log_prefactor(g1, g2, q3, inter, x))
    a1 = inter.alpha1(x)
    a2 = inter.alpha2(x)
    bracket = (inter._p1 - inter._p2) @ inter.q1234 @ inter._p2
    bracket = bracket + np.outer(a1 - a2, a2) + inter._p2
    return pref * bracket
