"""Self-contained SVG rendering: density contours plus kernel ellipses.

No plotting dependency; contours come from a small marching-squares pass over
the evaluation grid and kernels are drawn as constant-Mahalanobis ellipses.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.stats import chi2


def mass_ellipse_radius_sq(dim: int, mass: float = 0.8) -> float:
    """Squared Mahalanobis radius enclosing the given Gaussian mass (chi-square quantile)."""
    return float(chi2.ppf(mass, df=dim))


def _interp(p1, p2, v1, v2, level):
    t = 0.5 if v2 == v1 else (level - v1) / (v2 - v1)
    return (p1[0] + t * (p2[0] - p1[0]), p1[1] + t * (p2[1] - p1[1]))


def marching_squares(xs: np.ndarray, ys: np.ndarray, field: np.ndarray,
                     level: float) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Iso-level segments of a scalar field sampled on a rectilinear grid.

    ``field`` has shape (len(xs), len(ys)). Returns data-coordinate segment
    endpoints; saddle cells use the mean-value disambiguation.
    """
    segments = []
    nx, ny = field.shape
    for i in range(nx - 1):
        for j in range(ny - 1):
            v = [field[i, j], field[i + 1, j], field[i + 1, j + 1], field[i, j + 1]]
            corners = [(xs[i], ys[j]), (xs[i + 1], ys[j]),
                       (xs[i + 1], ys[j + 1]), (xs[i], ys[j + 1])]
            case = sum(1 << k for k in range(4) if v[k] > level)
            if case in (0, 15):
                continue
            edges = {
                0: _interp(corners[0], corners[1], v[0], v[1], level),
                1: _interp(corners[1], corners[2], v[1], v[2], level),
                2: _interp(corners[3], corners[2], v[3], v[2], level),
                3: _interp(corners[0], corners[3], v[0], v[3], level),
            }
            lookup = {
                1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
                6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)], 9: [(2, 0)],
                11: [(1, 2)], 12: [(1, 3)], 13: [(0, 1)], 14: [(3, 0)],
            }
            if case in (5, 10):
                mean = sum(v) / 4.0
                if case == 5:
                    pairs = [(3, 0), (1, 2)] if mean > level else [(3, 2), (1, 0)]
                else:
                    pairs = [(0, 1), (2, 3)] if mean > level else [(0, 3), (2, 1)]
            else:
                pairs = lookup[case]
            for a, b in pairs:
                segments.append((edges[a], edges[b]))
    return segments


class SvgCanvas:
    """Minimal SVG writer over a fixed data-coordinate window (y axis up)."""

    def __init__(self, xlim, ylim, width: int = 640, height: int = 640, margin: int = 40):
        self.xlim, self.ylim = xlim, ylim
        self.width, self.height, self.margin = width, height, margin
        self._parts: list[str] = []

    def _map(self, x: float, y: float) -> tuple[float, float]:
        fx = (x - self.xlim[0]) / (self.xlim[1] - self.xlim[0])
        fy = (y - self.ylim[0]) / (self.ylim[1] - self.ylim[0])
        px = self.margin + fx * (self.width - 2 * self.margin)
        py = self.height - self.margin - fy * (self.height - 2 * self.margin)
        return px, py

    def segments(self, segs, color: str = "#1f4e79", width: float = 1.0) -> None:
        if not segs:
            return
        cmds = []
        for (x1, y1), (x2, y2) in segs:
            p1 = self._map(x1, y1)
            p2 = self._map(x2, y2)
            cmds.append(f"M{p1[0]:.2f},{p1[1]:.2f} L{p2[0]:.2f},{p2[1]:.2f}")
        self._parts.append(
            f'<path d="{" ".join(cmds)}" stroke="{color}" stroke-width="{width}" fill="none"/>'
        )

    def ellipse(self, center, cov, radius_sq: float, color: str = "#222222") -> None:
        """Outline of {x : (x-c)^T cov^{-1} (x-c) = radius_sq}."""
        w, v = np.linalg.eigh(np.asarray(cov, dtype=float))
        rx = math.sqrt(max(w[1], 0.0) * radius_sq)
        ry = math.sqrt(max(w[0], 0.0) * radius_sq)
        angle = math.degrees(math.atan2(v[1, 1], v[0, 1]))
        cx, cy = self._map(center[0], center[1])
        sx = (self.width - 2 * self.margin) / (self.xlim[1] - self.xlim[0])
        sy = (self.height - 2 * self.margin) / (self.ylim[1] - self.ylim[0])
        # SVG y runs downward; draw in a local frame rotated by -angle.
        self._parts.append(
            f'<ellipse cx="0" cy="0" rx="{rx * sx:.2f}" ry="{ry * sy:.2f}" '
            f'transform="translate({cx:.2f},{cy:.2f}) rotate({-angle:.2f})" '
            f'stroke="{color}" stroke-width="1.2" fill="none" class="kernel-ellipse"/>'
        )

    def dots(self, points, color: str = "#a33", r: float = 2.0) -> None:
        for x, y in points:
            px, py = self._map(x, y)
            self._parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{r}" fill="{color}"/>')

    def comment(self, text: str) -> None:
        self._parts.append(f"<!-- {text} -->")

    def render(self) -> str:
        body = "\n".join(self._parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
            f'<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n'
        )


def density_svg(
    xs: np.ndarray,
    ys: np.ndarray,
    field: np.ndarray,
    sample_points: np.ndarray,
    kernel_centers: Sequence[np.ndarray],
    kernel_covs: Sequence[np.ndarray],
    mass: float = 0.8,
    n_levels: int = 9,
    header: str = "",
) -> str:
    """Contour plot of a 2-D density grid with sample dots and kernel ellipses."""
    peak = float(field.max())
    canvas = SvgCanvas((float(xs[0]), float(xs[-1])), (float(ys[0]), float(ys[-1])))
    if header:
        canvas.comment(header)
    for frac in np.linspace(0.1, 0.9, n_levels):
        canvas.segments(marching_squares(xs, ys, field, frac * peak))
    canvas.dots(np.asarray(sample_points))
    rsq = mass_ellipse_radius_sq(2, mass)
    for center, cov in zip(kernel_centers, kernel_covs):
        canvas.ellipse(center, cov, rsq)
    return canvas.render()
