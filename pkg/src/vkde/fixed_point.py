"""Self-consistent bandwidth iteration.

Alternates between building the estimate from the current bandwidths and
re-selecting bandwidths from that estimate:

    h_n^{(k+1)} = Phi_N( MM_K[Y, h^{(k)}], y_n ),   n = 1..N.

The iteration is run plainly (no outer damping); convergence is reported,
never assumed. The default initializer is the wide-and-equal scalar rule
h0 = N^{-1/(d+4)} * (mean marginal standard deviation) * I.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .density import DensityAccess, KernelSpec, SampleSet, VkdeEstimate
from .exceptions import ConvergenceError, DomainError
from .selectors import SelectorConfig, select_all, select_all_with_mu

DEFAULT_RESIDUAL_TOL = 1e-6


@dataclass
class FpiTrace:
    """Iterates and residuals of one bandwidth fixed-point run.

    iterates[k] is the (N, d, d) bandwidth stack after k steps (index 0 is
    the initializer); residuals[k] is the max over n of the relative
    Frobenius change in h_n at step k+1.
    """

    iterates: list[np.ndarray] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    converged: bool = False
    steps: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    def to_csv(self) -> str:
        """Rows (k, n, vec(h_n)) for external plotting."""
        buf = io.StringIO()
        d = self.iterates[0].shape[1]
        cols = ",".join(f"h{i + 1}{j + 1}" for i in range(d) for j in range(d))
        buf.write(f"k,n,{cols}\n")
        for k, bw in enumerate(self.iterates):
            for n in range(bw.shape[0]):
                flat = ",".join(f"{v:.17g}" for v in bw[n].reshape(-1))
                buf.write(f"{k},{n},{flat}\n")
        return buf.getvalue()


class FixedPointAbort(ConvergenceError):
    """A selector failed mid-iteration; carries the trace so far."""

    def __init__(self, message: str, trace: FpiTrace, step: int):
        super().__init__(message)
        self.trace = trace
        self.step = step


def silverman_init(samples: SampleSet) -> np.ndarray:
    """Wide-and-equal scalar initializer (mean marginal std, N-scaled)."""
    pts = samples.points
    d = samples.dim
    if samples.n > 1:
        spread = float(np.mean(np.std(pts, axis=0, ddof=1)))
    else:
        spread = 1.0
    if spread <= 0:
        spread = 1.0
    h0 = samples.n ** (-1.0 / (d + 4)) * spread
    return np.broadcast_to(h0 * np.eye(d), (samples.n, d, d)).copy()


def _resolve_init(samples: SampleSet, init) -> np.ndarray:
    if init is None or (isinstance(init, str) and init == "silverman"):
        return silverman_init(samples)
    if isinstance(init, str):
        raise DomainError(f"unknown init rule {init!r}")
    arr = np.asarray(init, dtype=float)
    if arr.ndim == 0:
        arr = float(arr) * np.eye(samples.dim)
    if arr.ndim == 2:
        arr = np.broadcast_to(arr, (samples.n, samples.dim, samples.dim)).copy()
    if arr.shape != (samples.n, samples.dim, samples.dim):
        raise DomainError("init bandwidths must broadcast to shape (N, d, d)")
    if np.any(np.abs(np.linalg.det(arr)) == 0.0):
        raise DomainError("init bandwidths must be invertible")
    return arr


def iterate_bandwidths(
    samples: SampleSet,
    selector: SelectorConfig,
    steps: int,
    init: Union[None, str, np.ndarray] = None,
    kernel: Optional[KernelSpec] = None,
    residual_tol: float = DEFAULT_RESIDUAL_TOL,
) -> FpiTrace:
    """Run the estimate-then-reselect iteration for ``steps`` steps.

    Stops early once the max relative Frobenius change drops below
    ``residual_tol``. A selector domain error aborts with the trace so far
    and the offending step wrapped in FixedPointAbort.
    """
    if not isinstance(samples, SampleSet):
        samples = SampleSet(samples)
    trace = FpiTrace()
    current = _resolve_init(samples, init)
    trace.iterates.append(current.copy())
    mu_warm = None  # per-sample mu^2 carried across outer steps
    for k in range(int(steps)):
        est = VkdeEstimate(samples, current, kernel=kernel)
        access = DensityAccess.from_estimate(est)
        try:
            new, mu_results = select_all_with_mu(
                selector, access, samples.points, n_samples=samples.n, mu_warm=mu_warm
            )
        except (DomainError, ConvergenceError) as exc:
            raise FixedPointAbort(
                f"selector failed at iteration step {k}: {exc}", trace, step=k
            ) from exc
        if mu_results is not None:
            mu_warm = [r.mu_squared for r in mu_results]
        denom = np.maximum(np.linalg.norm(current, axis=(1, 2)), np.finfo(float).tiny)
        residual = float(np.max(np.linalg.norm(new - current, axis=(1, 2)) / denom))
        current = new
        trace.iterates.append(current.copy())
        trace.residuals.append(residual)
        trace.steps = k + 1
        if residual < residual_tol:
            trace.converged = True
            break
    return trace


def self_consistency_residual(
    samples: SampleSet,
    selector: SelectorConfig,
    bandwidths: np.ndarray,
    kernel: Optional[KernelSpec] = None,
) -> float:
    """max_n relative Frobenius distance between h_n and Phi_N(MM_K[Y, h], y_n)."""
    if not isinstance(samples, SampleSet):
        samples = SampleSet(samples)
    bw = np.asarray(bandwidths, dtype=float)
    est = VkdeEstimate(samples, bw, kernel=kernel)
    access = DensityAccess.from_estimate(est)
    reselected = select_all(selector, access, samples.points, n_samples=samples.n)
    denom = np.maximum(np.linalg.norm(bw, axis=(1, 2)), np.finfo(float).tiny)
    return float(np.max(np.linalg.norm(reselected - bw, axis=(1, 2)) / denom))
