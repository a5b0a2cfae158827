"""Pointwise fixed-point solver for the adaptation function mu.

mu(x) is the SPD matrix field measuring the local variation of a density f,
defined implicitly by

    mu^2(x) = [ (grad f grad f^T - f D^2 f) * G^2_S ] (x)
              -----------------------------------------,   S = (lambda mu(x))^{-2},
              (2 - lambda^2) [ f^2 * G^2_S ] (x)

and solved here by damped fixed-point iteration on mu^2. Two evaluation paths
feed the ratio:

* mixture path - for Gaussian mixtures (every Gaussian-kernel estimate) the
  two smoothing convolutions have closed forms; the solver batches them over
  all component pairs.
* quadrature path - for analytic densities the convolutions are Gauss-Hermite
  expectations of f^2 and f^2 (-D^2 log f) under the smoothing Gaussian
  (grad f grad f^T - f D^2 f identically equals -f^2 D^2 log f).

Both paths are invariant under positive rescaling of f by construction, so
the unnormalized densities used in the invariance checks need no special
handling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .density import DensityAccess, GaussianMixture, VkdeEstimate
from .exceptions import ConvergenceError, DomainError
from .gauss import clamp_spd_lenient, inv_spd, sqrt_spd, symmetrize

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class AdaptationConfig:
    """Solver knobs for the mu fixed point.

    lam is the smoothing parameter of the implicit definition (open interval
    (0, sqrt 2)); the default 1.0 makes the denominator factor 2 - lam^2 = 1.
    quad_nodes is the per-axis Gauss-Hermite order of the analytic path.
    """

    lam: float = 1.0
    tol: float = 1e-10
    max_iter: int = 200
    damping: float = 0.5
    quad_nodes: int = 24

    def __post_init__(self) -> None:
        if not (0.0 < self.lam < SQRT2):
            raise DomainError(f"lambda must lie in (0, sqrt(2)), got {self.lam}")
        if self.tol <= 0:
            raise DomainError("tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be at least 1")
        if not (0.0 < self.damping <= 1.0):
            raise DomainError(f"damping must lie in (0, 1], got {self.damping}")
        if self.quad_nodes < 2:
            raise DomainError("quad_nodes must be at least 2")


@dataclass
class AdaptationResult:
    """Converged (or last) state of one pointwise mu solve."""

    x: np.ndarray
    mu: np.ndarray
    mu_squared: np.ndarray
    iterations: int
    converged: bool
    residual: float
    clamped: bool = False


class _MixtureMuSolver:
    """Closed-form ratio evaluation, batched over all mixture component pairs.

    Static pair quantities (pair precision sums, product Gaussians of the
    mean differences) are precomputed once; only the smoothing-dependent
    pieces are rebuilt per iteration. Scalar factors common to numerator and
    denominator (the 1/N^2 weights normalization, |det Q3|^{-1/2} (4 pi)^{-d/2})
    cancel in the ratio and are dropped.
    """

    def __init__(self, mixture: GaussianMixture, cfg: AdaptationConfig):
        self.cfg = cfg
        self.dim = mixture.dim
        n, d = mixture.n, mixture.dim
        means = mixture.means
        prec = mixture.precisions
        covs = mixture.covs
        logw = np.log(mixture.weights)

        pair = lambda a, b: (a[:, None], b[None, :])  # noqa: E731 - broadcast helper

        p1, p2 = pair(prec, prec)
        self.p1 = np.broadcast_to(p1, (n, n, d, d)).reshape(-1, d, d)
        self.p2 = np.broadcast_to(p2, (n, n, d, d)).reshape(-1, d, d)
        y1, y2 = pair(means, means)
        self.y1 = np.broadcast_to(y1, (n, n, d)).reshape(-1, d)
        self.y2 = np.broadcast_to(y2, (n, n, d)).reshape(-1, d)

        self.ppair = self.p1 + self.p2
        self.q12 = np.linalg.inv(self.ppair)
        py = np.einsum("nij,nj->ni", prec, means)
        s1, s2 = pair(py, py)
        self.spair = (np.broadcast_to(s1, (n, n, d)) + np.broadcast_to(s2, (n, n, d))).reshape(-1, d)
        self.y12 = np.einsum("pij,pj->pi", self.q12, self.spair)

        cov_sum = (covs[:, None] + covs[None, :]).reshape(-1, d, d)
        diff = self.y1 - self.y2
        sign, logdet = np.linalg.slogdet(cov_sum)
        if np.any(sign <= 0):
            raise DomainError("singular pair covariance sum Q1 + Q2")
        quad = np.einsum("pi,pi->p", diff, np.linalg.solve(cov_sum, diff[..., None])[..., 0])
        self.log_pair = -0.5 * (d * math.log(2.0 * math.pi) + logdet + quad)
        self.logw_pair = (logw[:, None] + logw[None, :]).reshape(-1)

    def ratio(self, x: np.ndarray, mu_sq: np.ndarray) -> np.ndarray:
        lam2 = self.cfg.lam**2
        d = self.dim
        q3inv = lam2 * mu_sq
        q3 = inv_spd(q3inv)

        q1234 = np.linalg.inv(self.ppair + 2.0 * q3inv)
        rhs = self.spair + (2.0 * q3inv @ x)[None, :]
        post_mean = np.einsum("pij,pj->pi", q1234, rhs)
        a1 = np.einsum("pij,pj->pi", self.p1, post_mean - self.y1)
        a2 = np.einsum("pij,pj->pi", self.p2, post_mean - self.y2)

        smooth_cov = self.q12 + 0.5 * q3
        sign, logdet = np.linalg.slogdet(smooth_cov)
        r = x[None, :] - self.y12
        quad = np.einsum("pi,pi->p", r, np.linalg.solve(smooth_cov, r[..., None])[..., 0])
        log_at_x = -0.5 * (d * math.log(2.0 * math.pi) + logdet + quad)

        logpref = self.logw_pair + self.log_pair + log_at_x
        top = logpref.max()
        if not np.isfinite(top):
            raise DomainError("all pair contributions vanished; point too far in the tails")
        w = np.exp(logpref - top)

        bracket = np.einsum("pij,pjk,pkl->pil", self.p1 - self.p2, q1234, self.p2)
        bracket += np.einsum("pi,pj->pij", a1 - a2, a2)
        bracket += self.p2

        den = (2.0 - lam2) * w.sum()
        num = np.einsum("p,pij->ij", w, bracket)
        return symmetrize(num) / den


class _QuadratureMuSolver:
    """Gauss-Hermite evaluation of the ratio for analytic densities.

    Uses the identity grad f grad f^T - f D^2 f = f^2 (-D^2 log f); both the
    numerator and denominator become expectations of f^2-weighted fields
    under the smoothing Gaussian, evaluated stably through log f.
    """

    def __init__(self, access: DensityAccess, cfg: AdaptationConfig):
        for attr in ("log_value", "log_hessian"):
            if not hasattr(access, attr):
                raise DomainError("quadrature mu path requires log-density access")
        self.access = access
        self.cfg = cfg
        self.dim = access.dim
        nodes, weights = np.polynomial.hermite.hermgauss(cfg.quad_nodes)
        grids = np.meshgrid(*([nodes] * self.dim), indexing="ij")
        self.xi = np.stack([g.reshape(-1) for g in grids], axis=1)
        w = np.ones(self.xi.shape[0])
        wgrids = np.meshgrid(*([weights] * self.dim), indexing="ij")
        for g in wgrids:
            w = w * g.reshape(-1)
        self.w = w / w.sum()

    def ratio(self, x: np.ndarray, mu_sq: np.ndarray) -> np.ndarray:
        lam2 = self.cfg.lam**2
        smooth_cov = inv_spd(2.0 * lam2 * mu_sq)
        chol = np.linalg.cholesky(smooth_cov)
        pts = x[None, :] - SQRT2 * (self.xi @ chol.T)
        logf = np.asarray(self.access.log_value(pts), dtype=float)
        top = logf.max()
        if not np.isfinite(top):
            raise DomainError("density vanished on the whole quadrature stencil")
        w = self.w * np.exp(2.0 * (logf - top))
        log_hess = self.access.log_hessian(pts)
        den = (2.0 - lam2) * w.sum()
        num = -np.einsum("p,pij->ij", w, log_hess)
        return symmetrize(num) / den


def _resolve_solver(target, cfg: AdaptationConfig):
    if isinstance(target, DensityAccess):
        mixture = target.mixture
        if mixture is not None:
            return _MixtureMuSolver(mixture, cfg), target.mu_init_squared
        return _QuadratureMuSolver(target, cfg), target.mu_init_squared
    if isinstance(target, VkdeEstimate):
        access = DensityAccess.from_estimate(target)
        return _MixtureMuSolver(access.mixture, cfg), access.mu_init_squared
    if isinstance(target, GaussianMixture):
        return _MixtureMuSolver(target, cfg), inv_spd(target.covariance())
    raise DomainError(f"cannot compute mu for target of type {type(target).__name__}")


def mu_fixed_point(
    target,
    x: np.ndarray,
    cfg: Optional[AdaptationConfig] = None,
    mu0_squared: Optional[np.ndarray] = None,
) -> AdaptationResult:
    """Solve the implicit mu equation at one point.

    ``target`` may be a VkdeEstimate, a GaussianMixture, or any DensityAccess.
    ``mu0_squared`` overrides the default initializer (inverse sample or
    mixture covariance). Non-convergence within max_iter is reported through
    ``converged=False``; the caller decides whether that is fatal.
    """
    cfg = cfg or AdaptationConfig()
    solver, default_init = _resolve_solver(target, cfg)
    return _iterate(solver, np.asarray(x, dtype=float), cfg, mu0_squared, default_init)


def _iterate(solver, x, cfg, mu0_squared, default_init) -> AdaptationResult:
    """Damped fixed-point loop with adaptive relaxation and secant jumps.

    cfg.damping is the initial relaxation factor; it shrinks when successive
    updates oscillate (the ridge instability the damping exists for) and
    grows toward 1 when they align. On a stretch of stable linear
    convergence a guarded secant extrapolation jumps to the predicted fixed
    point, which keeps slow tail points (contraction rates around 0.95)
    inside the iteration budget.
    """
    if x.ndim != 1 or x.size != solver.dim:
        raise DomainError(f"expected a point of dimension {solver.dim}")
    if mu0_squared is not None:
        mu_sq = symmetrize(np.asarray(mu0_squared, dtype=float))
    elif default_init is not None:
        mu_sq = symmetrize(np.asarray(default_init, dtype=float))
    else:
        raise DomainError("no mu initializer available; pass mu0_squared")

    delta = cfg.damping
    prev_f: Optional[np.ndarray] = None
    prev_delta = delta
    cooldown = 0
    hold = 0
    history: list[np.ndarray] = [mu_sq.copy()]
    clamped_any = False
    residual = math.inf
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        ratio = solver.ratio(x, mu_sq)
        ratio, clamped = clamp_spd_lenient(ratio, name="mu^2 ratio")
        clamped_any = clamped_any or clamped
        f = ratio - mu_sq

        jump = None
        if prev_f is not None:
            fn = float(np.linalg.norm(f))
            pn = float(np.linalg.norm(prev_f))
            if fn > 0.0 and pn > 0.0:
                inner = float(np.sum(f * prev_f))
                cos = inner / (fn * pn)
                if cos < 0.0:
                    delta = max(0.5 * delta, 1e-3)
                    hold = 3
                elif cos > 0.9 and hold == 0:
                    delta = min(1.2 * delta, 1.0)
                hold = max(0, hold - 1)
                q = inner / pn**2
                if cooldown == 0 and cos > 0.9 and 0.0 < q < 0.995:
                    # linear model f_k ~ q f_{k-1} under step delta_prev gives
                    # the fixed-point prediction mu + delta_prev f / (1 - q)
                    jump = prev_delta * f / (1.0 - q)
                    cooldown = 2

        if jump is not None:
            new = mu_sq + jump
        else:
            new = mu_sq + delta * f
        cooldown = max(0, cooldown - 1)
        try:
            new, _ = clamp_spd_lenient(new, name="mu^2 iterate")
        except DomainError:
            new = mu_sq + delta * f  # discard a jump that left the SPD cone
            new, _ = clamp_spd_lenient(new, name="mu^2 iterate")

        # period-2 cycle breaker: when the iterate keeps returning to where it
        # was two steps ago, collapse to the cycle midpoint and damp hard.
        cycle_broken = False
        if len(history) >= 2:
            back2 = float(np.linalg.norm(new - history[-2]))
            step1 = float(np.linalg.norm(new - mu_sq))
            if step1 > 0.0 and back2 < 0.05 * step1:
                new, _ = clamp_spd_lenient(0.5 * (new + mu_sq), name="mu^2 iterate")
                delta = max(0.25 * delta, 1e-3)
                hold = 3
                cycle_broken = True
        history.append(new.copy())
        if len(history) > 3:
            history.pop(0)

        denom = max(float(np.linalg.norm(new)), np.finfo(float).tiny)
        residual = float(np.linalg.norm(new - mu_sq)) / denom
        # the slope estimate is stale right after a jump or a cycle break
        prev_f = None if (jump is not None or cycle_broken) else f
        prev_delta = delta
        mu_sq = new
        if residual < cfg.tol:
            converged = True
            break

    mu_sq = symmetrize(mu_sq)
    return AdaptationResult(
        x=x,
        mu=sqrt_spd(mu_sq),
        mu_squared=mu_sq,
        iterations=iterations,
        converged=converged,
        residual=residual,
        clamped=clamped_any,
    )


def mu_field(
    target,
    points: Sequence[np.ndarray],
    cfg: Optional[AdaptationConfig] = None,
    mu0_squared: Optional[np.ndarray] = None,
    warm: Optional[Sequence[Optional[np.ndarray]]] = None,
) -> list[AdaptationResult]:
    """Batch of pointwise solves, warm-started from the nearest solved point.

    ``warm`` optionally supplies a per-point initializer (e.g. the converged
    mu^2 from a previous outer iteration at the same locations); it takes
    precedence over the nearest-solved heuristic. Any non-converged or failed
    warm solve is retried from the cold default before giving up. Per-point
    failures (DomainError) are aggregated and re-raised after the sweep so
    one pathological point does not hide results for the rest.
    """
    cfg = cfg or AdaptationConfig()
    solver, default_init = _resolve_solver(target, cfg)
    pts = np.atleast_2d(np.asarray(points, dtype=float))

    results: list[Optional[AdaptationResult]] = []
    solved_x: list[np.ndarray] = []
    solved_musq: list[np.ndarray] = []
    failures: list[tuple[int, Exception]] = []
    for i, x in enumerate(pts):
        init = mu0_squared
        if init is None and warm is not None and warm[i] is not None:
            init = np.asarray(warm[i], dtype=float)
        if init is None and solved_x:
            dists = [float(np.linalg.norm(x - xs)) for xs in solved_x]
            j = int(np.argmin(dists))
            # Warm-start only from genuinely nearby points: a far-away seed can
            # drop the iteration into a spurious cycle. "Nearby" is measured in
            # the candidate's own mu units (its inverse is the local bandwidth).
            gap = x - solved_x[j]
            if float(gap @ solved_musq[j] @ gap) < 25.0:
                init = solved_musq[j]
        try:
            res = _iterate(solver, x, cfg, init, default_init)
            if not res.converged and init is not None and mu0_squared is None:
                res = _iterate(solver, x, cfg, None, default_init)
        except DomainError as exc:
            failures.append((i, exc))
            results.append(None)
            continue
        results.append(res)
        if res.converged:
            solved_x.append(x)
            solved_musq.append(res.mu_squared)
    if failures:
        details = "; ".join(f"point {i}: {exc}" for i, exc in failures)
        raise DomainError(f"mu solve failed at {len(failures)} of {len(pts)} points ({details})")
    return results  # type: ignore[return-value]


def require_converged(result: AdaptationResult) -> AdaptationResult:
    """Raise ConvergenceError when a solve did not reach tolerance."""
    if not result.converged:
        raise ConvergenceError(
            f"mu fixed point did not converge at x={np.array2string(result.x, precision=4)} "
            f"(residual {result.residual:.3e} after {result.iterations} iterations)"
        )
    return result
