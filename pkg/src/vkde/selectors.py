"""Bandwidth selection rules behind one interface.

Every rule maps (density access, location y, sample count N) to a d x d
bandwidth matrix:

* fixed          - the constant matrix h (the classical KDE);
* power law      - h = c N^{-1/(d+4)} rho(y)^{-beta} I;
* Parzen 1-D     - h = (C(K) rho(y) / (N rho''(y)^2))^{1/5};
* Parzen multi   - pointwise MSE minimization split by the Hessian signature
                   (definite / indefinite / semidefinite cases);
* axiomatic      - h = N^{-1/(d+4)} |kappa rho(y) / det mu(y)|^{-1/(d+4)} mu(y)^{-1}
                   with the adaptation function mu, the rule satisfying all
                   four invariance axioms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad

from .adaptation import AdaptationConfig, mu_field, mu_fixed_point, require_converged
from .density import DensityAccess, KernelSpec
from .exceptions import ConvergenceError, DomainError
from .gauss import inv_spd, symmetrize

#: C(K) for the standard Gaussian kernel: (1/(2 sqrt pi)) / (1/(4 sqrt pi))^2.
GAUSSIAN_CK = 8.0 * math.sqrt(math.pi)


def gaussian_r_constant(dim: int) -> float:
    """R(K) = integral of K^2 for the standard Gaussian kernel in ``dim`` dimensions."""
    return (4.0 * math.pi) ** (-dim / 2.0)


# ----------------------------------------------------------------------
# selector configurations

@dataclass(frozen=True)
class FixedBandwidth:
    """Classical KDE: one constant bandwidth (scalar multiple of I or full matrix)."""

    h: Union[float, np.ndarray] = 1.0
    kind = "fixed"


@dataclass(frozen=True)
class PowerLaw:
    """h proportional to rho(y)^{-beta}; beta is the sensitivity parameter."""

    beta: float = 0.5
    c: float = 1.0
    kind = "power_law"

    def __post_init__(self) -> None:
        if self.beta <= 0 or self.c <= 0:
            raise DomainError("power-law selector requires beta > 0 and c > 0")


@dataclass(frozen=True)
class ParzenUnivariate:
    """Parzen's univariate MSE-optimal law; ck is the kernel constant C(K)."""

    ck: float = GAUSSIAN_CK
    kind = "parzen1d"

    def __post_init__(self) -> None:
        if self.ck <= 0:
            raise DomainError("C(K) must be positive")


@dataclass(frozen=True)
class ParzenMultivariate:
    """Multivariate Parzen rule; eig_tol classifies the Hessian signature."""

    eig_tol: float = 1e-8
    kind = "parzen_multi"

    def __post_init__(self) -> None:
        if self.eig_tol <= 0:
            raise DomainError("eig_tol must be positive")


@dataclass(frozen=True)
class Axiomatic:
    """The adaptation-function rule; kappa is the open overall constant."""

    kappa: float = 1.0
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    kind = "axiomatic"

    def __post_init__(self) -> None:
        if self.kappa <= 0:
            raise DomainError("kappa must be positive")


SelectorConfig = Union[FixedBandwidth, PowerLaw, ParzenUnivariate, ParzenMultivariate, Axiomatic]


# ----------------------------------------------------------------------
# individual rules

def select_power_law(access: DensityAccess, y: np.ndarray, n_samples: int,
                     beta: float, c: float = 1.0) -> np.ndarray:
    d = access.dim
    rho = float(access.value(np.asarray(y, dtype=float)))
    if not rho > 0.0:
        raise DomainError(f"power-law selector needs rho(y) > 0, got {rho:g} (tail point?)")
    h = c * n_samples ** (-1.0 / (d + 4)) * rho ** (-beta)
    return h * np.eye(d)


def kernel_constant_ck(kernel: KernelSpec) -> float:
    """C(K) = int K^2 / (int t^2 K^2)^2 for a one-dimensional kernel, by quadrature."""
    if kernel.dim != 1:
        raise DomainError("C(K) is defined for one-dimensional kernels")

    def k2(t):
        v = kernel.gamma(np.asarray([t * t], dtype=float))
        return float(np.asarray(v).reshape(-1)[0]) ** 2

    def t2k2(t):
        return t * t * k2(t)

    if kernel.support_radius is not None:
        lo, hi = -kernel.support_radius, kernel.support_radius
    else:
        lo, hi = -np.inf, np.inf
    int_k2, err_k2 = quad(k2, lo, hi, epsabs=1e-12, epsrel=1e-11, limit=200)
    int_t2k2, err_t2 = quad(t2k2, lo, hi, epsabs=1e-12, epsrel=1e-11, limit=200)
    if not (np.isfinite(int_k2) and np.isfinite(int_t2k2)) or int_t2k2 <= 0:
        raise DomainError("kernel moments diverge; C(K) undefined")
    if err_k2 > 1e-6 * max(int_k2, 1.0) or err_t2 > 1e-6 * max(int_t2k2, 1.0):
        raise DomainError("kernel moment quadrature did not converge")
    return int_k2 / int_t2k2**2


def select_parzen_1d(access: DensityAccess, y: np.ndarray, n_samples: int,
                     ck: float = GAUSSIAN_CK) -> np.ndarray:
    if access.dim != 1:
        raise DomainError("univariate Parzen rule requires d = 1")
    y = np.asarray(y, dtype=float).reshape(1)
    rho = float(access.value(y))
    if not rho > 0.0:
        raise DomainError(f"Parzen rule needs rho(y) > 0, got {rho:g}")
    rho_pp = float(np.atleast_2d(access.hessian(y))[0, 0])
    if rho_pp == 0.0:
        raise DomainError("rho''(y) = 0 (inflection point); Parzen bandwidth undefined")
    h = (ck * rho / (n_samples * rho_pp**2)) ** 0.2
    return np.array([[h]])


def _case2_shape_matrix(eigvals: np.ndarray, eigvecs: np.ndarray) -> np.ndarray:
    """Unit-determinant B with tr(B^T H B) = 0 for an indefinite Hessian.

    Positive-eigenvalue directions get their individual delta_j^{-1/2}; the
    negated group shares delta^{-1/2} with delta = (sum of negated
    magnitudes) / k, which cancels the trace for any signature split.
    """
    pos = eigvals > 0
    k = int(np.count_nonzero(pos))
    neg_mag = -eigvals[~pos]
    delta = float(neg_mag.sum()) / k
    entries = np.where(pos, np.abs(eigvals), delta) ** -0.5
    b_tilde = symmetrize((eigvecs * entries) @ eigvecs.T)
    det_bt = float(np.prod(entries))
    return det_bt ** (-1.0 / eigvals.size) * b_tilde


def select_parzen_multi(access: DensityAccess, y: np.ndarray, n_samples: int,
                        eig_tol: float = 1e-8,
                        r_constant: Optional[float] = None) -> np.ndarray:
    d = access.dim
    if d < 2:
        raise DomainError("multivariate Parzen rule requires d >= 2")
    y = np.asarray(y, dtype=float)
    rho = float(access.value(y))
    if not rho > 0.0:
        raise DomainError(f"Parzen rule needs rho(y) > 0, got {rho:g}")
    rk = gaussian_r_constant(d) if r_constant is None else r_constant

    hess = symmetrize(np.atleast_2d(access.hessian(y)))
    eigvals, eigvecs = np.linalg.eigh(hess)
    top = float(np.abs(eigvals).max())
    if top == 0.0:
        raise DomainError("Hessian vanishes at y; Parzen bandwidth undefined")
    thr = eig_tol * top
    zero = np.abs(eigvals) <= thr
    has_pos = bool(np.any(eigvals > thr))
    has_neg = bool(np.any(eigvals < -thr))

    if has_pos and has_neg:
        # Case 2 (indefinite). Near-zero eigenvalues are pushed into the
        # positive group at the threshold magnitude; measure-zero corner.
        vals = np.where(zero, thr, eigvals)
        b = _case2_shape_matrix(vals, eigvecs)
        delta4 = float(access.delta4(y, b))
        if delta4 == 0.0 or not np.isfinite(delta4):
            raise DomainError("Delta4(rho, B)(y) = 0; saddle-case bandwidth undefined")
        lam_opt = (24.0**2 * d * rho * rk / (n_samples * delta4**2)) ** (1.0 / (d + 8))
        return lam_opt * b

    # Cases 1 and 3 share the definite formula; Case 3 clamps its zero
    # eigenvalues to the threshold magnitude first (documented deviation from
    # the dimension-reduction treatment).
    sign = 1.0 if has_pos or (not has_neg and np.all(eigvals >= 0)) else -1.0
    vals = sign * eigvals
    vals = np.where(zero, thr, vals)
    if np.any(vals <= 0):
        raise DomainError("Hessian classification failed; mixed signs below threshold")
    absdet = float(np.prod(vals))
    factor = (rho * rk * math.sqrt(absdet) / (d * n_samples)) ** (1.0 / (d + 4))
    inv_sqrt = symmetrize((eigvecs * vals**-0.5) @ eigvecs.T)
    return factor * inv_sqrt


def select_axiomatic(access: DensityAccess, y: np.ndarray, n_samples: int,
                     config: Optional[Axiomatic] = None) -> np.ndarray:
    config = config or Axiomatic()
    y = np.asarray(y, dtype=float)
    rho = float(access.value(y))
    if not rho > 0.0:
        raise DomainError(f"axiomatic selector needs rho(y) > 0, got {rho:g}")
    result = mu_fixed_point(access, y, config.adaptation)
    try:
        require_converged(result)
    except ConvergenceError as exc:
        raise ConvergenceError(f"{exc}; axiomatic selection aborted at this point") from exc
    return _axiomatic_from_mu(result.mu, rho, n_samples, config.kappa, access.dim)


def _axiomatic_from_mu(mu: np.ndarray, rho: float, n_samples: int,
                       kappa: float, d: int) -> np.ndarray:
    det_mu = float(np.linalg.det(mu))
    pref = n_samples ** (-1.0 / (d + 4)) * abs(kappa * rho / det_mu) ** (-1.0 / (d + 4))
    return pref * inv_spd(mu)


# ----------------------------------------------------------------------
# dispatch

def select_bandwidth(config: SelectorConfig, access: DensityAccess,
                     y: np.ndarray, n_samples: int) -> np.ndarray:
    """Apply one selection rule at one location."""
    d = access.dim
    if isinstance(config, FixedBandwidth):
        h = config.h
        if np.ndim(h) == 0:
            if float(h) <= 0:
                raise DomainError("fixed scalar bandwidth must be positive")
            return float(h) * np.eye(d)
        h = np.atleast_2d(np.asarray(h, dtype=float))
        if h.shape != (d, d) or abs(np.linalg.det(h)) == 0.0:
            raise DomainError(f"fixed bandwidth must be an invertible {d}x{d} matrix")
        return h
    if isinstance(config, PowerLaw):
        return select_power_law(access, y, n_samples, config.beta, config.c)
    if isinstance(config, ParzenUnivariate):
        return select_parzen_1d(access, y, n_samples, config.ck)
    if isinstance(config, ParzenMultivariate):
        return select_parzen_multi(access, y, n_samples, config.eig_tol)
    if isinstance(config, Axiomatic):
        return select_axiomatic(access, y, n_samples, config)
    raise DomainError(f"unknown selector configuration {config!r}")


def select_all(config: SelectorConfig, access: DensityAccess,
               points: np.ndarray, n_samples: Optional[int] = None,
               mu_warm: Optional[list] = None) -> np.ndarray:
    """Bandwidths for a whole point batch, shape (N, d, d).

    The axiomatic rule shares one adaptation solver across the batch and
    warm-starts each point from the nearest already-solved one (or from the
    caller-provided per-point mu^2 seeds in ``mu_warm``).
    """
    return select_all_with_mu(config, access, points, n_samples, mu_warm)[0]


def select_all_with_mu(config: SelectorConfig, access: DensityAccess,
                       points: np.ndarray, n_samples: Optional[int] = None,
                       mu_warm: Optional[list] = None):
    """select_all plus the per-point adaptation results (None off the axiomatic rule)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0] if n_samples is None else int(n_samples)
    if isinstance(config, Axiomatic):
        results = mu_field(access, pts, config.adaptation, warm=mu_warm)
        out = np.empty((pts.shape[0], access.dim, access.dim))
        for i, res in enumerate(results):
            require_converged(res)
            rho = float(access.value(pts[i]))
            if not rho > 0.0:
                raise DomainError(f"axiomatic selector needs rho(y) > 0 at sample {i}")
            out[i] = _axiomatic_from_mu(res.mu, rho, n, config.kappa, access.dim)
        return out, results
    return np.stack([select_bandwidth(config, access, pt, n) for pt in pts]), None


# ----------------------------------------------------------------------
# JSON configuration (exact key set documented in the CLI module)

def selector_to_dict(config: SelectorConfig) -> dict:
    if isinstance(config, FixedBandwidth):
        h = config.h
        return {"kind": "fixed", "h": float(h) if np.ndim(h) == 0 else np.asarray(h).tolist()}
    if isinstance(config, PowerLaw):
        return {"kind": "power_law", "beta": config.beta, "c": config.c}
    if isinstance(config, ParzenUnivariate):
        return {"kind": "parzen1d", "ck": config.ck}
    if isinstance(config, ParzenMultivariate):
        return {"kind": "parzen_multi", "eig_tol": config.eig_tol}
    if isinstance(config, Axiomatic):
        return {"kind": "axiomatic", "kappa": config.kappa, "lambda": config.adaptation.lam}
    raise DomainError(f"unknown selector configuration {config!r}")


_SELECTOR_KEYS = {
    "fixed": {"h"},
    "power_law": {"beta", "c"},
    "parzen1d": {"ck"},
    "parzen_multi": {"eig_tol"},
    "axiomatic": {"kappa", "lambda"},
}


def selector_from_dict(doc: dict) -> SelectorConfig:
    from .exceptions import ConfigError

    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError("selector document must be an object with a 'kind' key")
    kind = doc["kind"]
    if kind not in _SELECTOR_KEYS:
        raise ConfigError(f"unknown selector kind {kind!r}; expected one of {sorted(_SELECTOR_KEYS)}")
    unknown = set(doc) - {"kind"} - _SELECTOR_KEYS[kind]
    if unknown:
        raise ConfigError(f"unknown selector keys for kind {kind!r}: {sorted(unknown)}")
    try:
        if kind == "fixed":
            h = doc.get("h", 1.0)
            return FixedBandwidth(h=float(h) if np.ndim(h) == 0 else np.asarray(h, dtype=float))
        if kind == "power_law":
            return PowerLaw(beta=float(doc.get("beta", 0.5)), c=float(doc.get("c", 1.0)))
        if kind == "parzen1d":
            return ParzenUnivariate(ck=float(doc.get("ck", GAUSSIAN_CK)))
        if kind == "parzen_multi":
            return ParzenMultivariate(eig_tol=float(doc.get("eig_tol", 1e-8)))
        adaptation = AdaptationConfig(lam=float(doc.get("lambda", 1.0)))
        return Axiomatic(kappa=float(doc.get("kappa", 1.0)), adaptation=adaptation)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
