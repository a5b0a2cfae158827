"""Seeded samplers, sample-set file I/O, and earthquake-catalog ingestion.

Reproducibility scheme: every generator is a numpy PCG64 seeded through
``SeedSequence((seed, counter))``; replication k of a benchmark uses counter
k, so runs are reproducible and parallelizable without stream overlap.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .density import BananaDensity, GaussianMixture, SampleSet
from .exceptions import DomainError, ParseError

#: Candidate bounding box for the East-Asia / Western-Pacific restriction
#: (longitude, latitude, degrees). Calibrated against the published sample
#: count when the real catalog is available; see calibrate_quake_box.
DEFAULT_QUAKE_BOX = {"lon_range": (90.0, 180.0), "lat_range": (-20.0, 60.0)}

QUAKE_DATA_URL = "http://people.stern.nyu.edu/jsimonof/SmoothMeth/Data/ASCII/quake.dat"


def rng_for(seed: int, counter: int = 0) -> np.random.Generator:
    """PCG64 generator for (seed, counter); the documented stream-splitting scheme."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed), int(counter)))))


def sample_banana(n: int, alpha: float = 4.0, sigma: float = 5.0,
                  seed: int = 0, counter: int = 0,
                  rng: Optional[np.random.Generator] = None) -> SampleSet:
    """Draw from the banana density via its exact factorization:
    x1 ~ N(0, sigma^2), x2 | x1 ~ N(alpha (x1/sigma)^2, 1)."""
    if n < 1:
        raise DomainError("need at least one sample")
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    gen = rng if rng is not None else rng_for(seed, counter)
    x1 = sigma * gen.standard_normal(n)
    x2 = alpha * (x1 / sigma) ** 2 + gen.standard_normal(n)
    return SampleSet(np.column_stack([x1, x2]))


def sample_gauss_mix(mixture: GaussianMixture, n: int,
                     seed: int = 0, counter: int = 0,
                     rng: Optional[np.random.Generator] = None) -> SampleSet:
    """Draw from a Gaussian mixture (component choice, then Cholesky transform)."""
    if n < 1:
        raise DomainError("need at least one sample")
    gen = rng if rng is not None else rng_for(seed, counter)
    ks = gen.choice(mixture.n, size=n, p=mixture.weights)
    z = gen.standard_normal((n, mixture.dim))
    chols = np.linalg.cholesky(mixture.covs)
    pts = mixture.means[ks] + np.einsum("nij,nj->ni", chols[ks], z)
    return SampleSet(pts)


def sampler_for(truth):
    """Sampling function (n, rng) -> SampleSet matching an analytic truth."""
    if isinstance(truth, BananaDensity):
        return lambda n, rng: sample_banana(n, truth.alpha, truth.sigma, rng=rng)
    if isinstance(truth, GaussianMixture):
        return lambda n, rng: sample_gauss_mix(truth, n, rng=rng)
    raise DomainError(f"no sampler known for {type(truth).__name__}")


# ----------------------------------------------------------------------
# sample-set files

def save_samples(samples: SampleSet, path, header: Optional[Sequence[str]] = None) -> None:
    """Write one row per point, full float precision, optional header row."""
    path = Path(path)
    lines = []
    if header is not None:
        lines.append(",".join(header))
    for row in samples.points:
        lines.append(",".join(f"{v:.17g}" for v in row))
    path.write_text("\n".join(lines) + "\n")


def _split_row(line: str) -> list[str]:
    return line.replace(",", " ").split()


def load_samples(path) -> SampleSet:
    """Load a delimited numeric table; a non-numeric first row is a header."""
    path = Path(path)
    rows: list[list[float]] = []
    width = None
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = _split_row(line)
            try:
                values = [float(v) for v in fields]
            except ValueError:
                if not rows:
                    continue  # header row
                raise ParseError(f"{path}:{lineno}: non-numeric field in {fields!r}")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(
                    f"{path}:{lineno}: ragged row has {len(values)} fields, expected {width}"
                )
            rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return SampleSet(np.asarray(rows, dtype=float))


# ----------------------------------------------------------------------
# earthquake catalog

@dataclass(frozen=True)
class QuakeFilter:
    """Magnitude threshold (strict) plus closed latitude/longitude windows."""

    min_magnitude: float
    lat_range: tuple[float, float]
    lon_range: tuple[float, float]

    def __post_init__(self) -> None:
        if self.lat_range[0] > self.lat_range[1] or self.lon_range[0] > self.lon_range[1]:
            raise DomainError("coordinate ranges must be nonempty")


def load_quake_table(path, columns: tuple[int, int, int] = (0, 1, 2)) -> np.ndarray:
    """Raw (magnitude, latitude, longitude) rows from a delimited catalog file."""
    path = Path(path)
    mag_i, lat_i, lon_i = columns
    need = max(columns) + 1
    rows = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = _split_row(line)
            if len(fields) < need:
                raise ParseError(f"{path}:{lineno}: expected at least {need} columns, got {len(fields)}")
            try:
                rows.append([float(fields[mag_i]), float(fields[lat_i]), float(fields[lon_i])])
            except ValueError:
                if not rows:
                    continue  # header row
                raise ParseError(f"{path}:{lineno}: non-numeric field in {fields!r}")
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def load_quakes(path, flt: QuakeFilter, columns: tuple[int, int, int] = (0, 1, 2)) -> SampleSet:
    """Filtered quake locations as 2-D samples (longitude, latitude as Cartesian)."""
    table = load_quake_table(path, columns)
    mag, lat, lon = table[:, 0], table[:, 1], table[:, 2]
    keep = (
        (mag > flt.min_magnitude)
        & (lat >= flt.lat_range[0]) & (lat <= flt.lat_range[1])
        & (lon >= flt.lon_range[0]) & (lon <= flt.lon_range[1])
    )
    if not np.any(keep):
        raise DomainError("quake filter left no samples")
    return SampleSet(np.column_stack([lon[keep], lat[keep]]))


def calibrate_quake_box(
    path,
    target: int = 145,
    min_magnitude: float = 6.2,
    columns: tuple[int, int, int] = (0, 1, 2),
    lon_step: float = 5.0,
    lat_step: float = 5.0,
) -> tuple[QuakeFilter, int]:
    """Grid-search a lon/lat box whose filtered count is closest to ``target``.

    Returns the best filter and its count; exact hits are preferred, ties go
    to the smaller box. Meant to be run once against the real catalog.
    """
    table = load_quake_table(path, columns)
    mag, lat, lon = table[:, 0], table[:, 1], table[:, 2]
    sel = mag > min_magnitude
    lat, lon = lat[sel], lon[sel]
    if lat.size == 0:
        raise DomainError("no rows above the magnitude threshold")

    lon_edges = np.arange(np.floor(lon.min()), np.ceil(lon.max()) + lon_step, lon_step)
    lat_edges = np.arange(np.floor(lat.min()), np.ceil(lat.max()) + lat_step, lat_step)
    best: tuple[int, float, QuakeFilter, int] | None = None
    for lo_lon in lon_edges:
        for hi_lon in lon_edges[lon_edges > lo_lon]:
            in_lon = (lon >= lo_lon) & (lon <= hi_lon)
            if not np.any(in_lon):
                continue
            for lo_lat in lat_edges:
                for hi_lat in lat_edges[lat_edges > lo_lat]:
                    count = int(np.count_nonzero(in_lon & (lat >= lo_lat) & (lat <= hi_lat)))
                    miss = abs(count - target)
                    area = (hi_lon - lo_lon) * (hi_lat - lo_lat)
                    key = (miss, area)
                    if best is None or key < (best[0], best[1]):
                        flt = QuakeFilter(min_magnitude, (lo_lat, hi_lat), (lo_lon, hi_lon))
                        best = (miss, area, flt, count)
    assert best is not None
    return best[2], best[3]
