"""Command-line front end.

Subcommands
-----------
estimate    one selection pass against the wide-and-equal pilot estimate;
            writes a density grid CSV, a bandwidth CSV and (with --svg) a
            contour/ellipse SVG.
iterate     the bandwidth fixed-point iteration; per-step density grids plus
            the residual trace CSV.
bench       seeded Monte-Carlo MISE comparison of all selector columns;
            writes JSON and a plain-text table.
invariance  numeric conformance report for the four invariance axioms;
            exit code 0 iff every check passes.
quakes      filter an earthquake catalog into a 2-D sample CSV.

Configuration document (JSON); unknown keys are rejected at every level:

    {
      "selector": {"kind": "fixed|power_law|parzen1d|parzen_multi|axiomatic",
                    "h": 1.0,            # fixed
                    "beta": 0.5, "c": 1.0,      # power_law
                    "ck": 14.179,               # parzen1d
                    "eig_tol": 1e-8,            # parzen_multi
                    "kappa": 1.0, "lambda": 1.0 # axiomatic
                  },
      "grid": [{"min": -24, "max": 24, "steps": 200}, ...]   # one entry per axis
      "seed": 0,
      "steps": 10,
      "svg": {"kernels": 6},
      "bench": {"n": 40, "reps": 20},
      "quakes": {"min_magnitude": 6.2, "lat_range": [-20, 60], "lon_range": [90, 180]}
    }

Exit codes: 0 success (invariance: all checks passed), 1 invariance failures,
2 configuration errors, 3 I/O errors, 4 numeric errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from ._svg import density_svg
from .data_io import DEFAULT_QUAKE_BOX, QuakeFilter, load_quakes, load_samples, save_samples
from .density import DensityAccess, SampleSet, VkdeEstimate, banana_density
from .evaluation import QuadratureGrid, invariance_report, run_benchmark
from .exceptions import ConfigError, ConvergenceError, DomainError, ParseError
from .fixed_point import iterate_bandwidths, silverman_init
from .selectors import SelectorConfig, select_all, selector_from_dict, selector_to_dict

_TOP_KEYS = {"selector", "grid", "seed", "steps", "svg", "bench", "quakes"}
_AXIS_KEYS = {"min", "max", "steps"}
_SVG_KEYS = {"kernels"}
_BENCH_KEYS = {"n", "reps"}
_QUAKE_KEYS = {"min_magnitude", "lat_range", "lon_range"}


def _reject_unknown(doc: dict, allowed: set, where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


class RunConfig:
    """Validated run configuration; every field has a documented default."""

    def __init__(self, doc: dict):
        if not isinstance(doc, dict):
            raise ConfigError("configuration document must be a JSON object")
        _reject_unknown(doc, _TOP_KEYS, "configuration")
        self.raw = doc
        self.selector: SelectorConfig = selector_from_dict(
            doc.get("selector", {"kind": "axiomatic"})
        )
        self.seed = int(doc.get("seed", 0))
        self.steps = int(doc.get("steps", 10))
        if self.steps < 0:
            raise ConfigError("steps must be nonnegative")

        axes = doc.get("grid")
        if axes is not None:
            if not isinstance(axes, list) or not axes:
                raise ConfigError("grid must be a nonempty list of axis objects")
            parsed = []
            for i, ax in enumerate(axes):
                if not isinstance(ax, dict):
                    raise ConfigError(f"grid axis {i} must be an object")
                _reject_unknown(ax, _AXIS_KEYS, f"grid axis {i}")
                try:
                    parsed.append((float(ax["min"]), float(ax["max"]), int(ax["steps"])))
                except KeyError as exc:
                    raise ConfigError(f"grid axis {i} is missing key {exc}")
            self.grid_axes = tuple(parsed)
        else:
            self.grid_axes = None

        svg = doc.get("svg", {})
        if not isinstance(svg, dict):
            raise ConfigError("svg must be an object")
        _reject_unknown(svg, _SVG_KEYS, "svg")
        self.svg_kernels = int(svg.get("kernels", 6))

        bench = doc.get("bench", {})
        if not isinstance(bench, dict):
            raise ConfigError("bench must be an object")
        _reject_unknown(bench, _BENCH_KEYS, "bench")
        self.bench_n = int(bench.get("n", 40))
        self.bench_reps = int(bench.get("reps", 20))

        quakes = doc.get("quakes", {})
        if not isinstance(quakes, dict):
            raise ConfigError("quakes must be an object")
        _reject_unknown(quakes, _QUAKE_KEYS, "quakes")
        self.quake_filter = QuakeFilter(
            min_magnitude=float(quakes.get("min_magnitude", 6.2)),
            lat_range=tuple(quakes.get("lat_range", DEFAULT_QUAKE_BOX["lat_range"])),
            lon_range=tuple(quakes.get("lon_range", DEFAULT_QUAKE_BOX["lon_range"])),
        )

    @property
    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def header(self) -> str:
        return f"config-hash: {self.config_hash}; seed: {self.seed}"


def _load_config(path, seed_override=None) -> RunConfig:
    if path is None:
        cfg = RunConfig({})
    else:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}")
        cfg = RunConfig(doc)
    if seed_override is not None:
        cfg.seed = int(seed_override)
    return cfg


def _default_grid(samples: SampleSet, steps: int = 100) -> tuple:
    pts = samples.points
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    pad = 0.5 * (hi - lo) + 1.0
    return tuple((float(l - p), float(h + p), steps) for l, h, p in zip(lo, hi, pad))


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _density_csv(grid: QuadratureGrid, values: np.ndarray, header: str) -> str:
    d = grid.dim
    cols = ",".join(f"x{i + 1}" for i in range(d)) + ",rho"
    lines = [f"# {header}", cols]
    for pt, v in zip(grid.points, values):
        lines.append(",".join(f"{c:.17g}" for c in pt) + f",{v:.17g}")
    return "\n".join(lines) + "\n"


def _bandwidth_csv(bandwidths: np.ndarray, header: str) -> str:
    d = bandwidths.shape[1]
    cols = "n," + ",".join(f"h{i + 1}{j + 1}" for i in range(d) for j in range(d))
    lines = [f"# {header}", cols]
    for n, h in enumerate(bandwidths):
        lines.append(f"{n}," + ",".join(f"{v:.17g}" for v in h.reshape(-1)))
    return "\n".join(lines) + "\n"


def _estimate_outputs(cfg: RunConfig, samples: SampleSet, bandwidths: np.ndarray,
                      out: Path, tag: str, with_svg: bool) -> None:
    est = VkdeEstimate(samples, bandwidths)
    axes = cfg.grid_axes or _default_grid(samples)
    if len(axes) != samples.dim:
        raise ConfigError(f"grid has {len(axes)} axes but samples have dimension {samples.dim}")
    grid = QuadratureGrid(axes)
    values = np.asarray(est.pdf(grid.points), dtype=float)
    _write(out / f"density{tag}.csv", _density_csv(grid, values, cfg.header()))
    _write(out / f"bandwidths{tag}.csv", _bandwidth_csv(bandwidths, cfg.header()))
    if with_svg:
        if samples.dim != 2:
            raise DomainError("SVG output requires 2-D samples")
        nx = axes[0][2]
        ny = axes[1][2]
        xs = np.linspace(axes[0][0], axes[0][1], nx)
        ys = np.linspace(axes[1][0], axes[1][1], ny)
        field = values.reshape(nx, ny)
        k = min(cfg.svg_kernels, samples.n)
        idx = np.unique(np.linspace(0, samples.n - 1, k).round().astype(int))
        covs = [bandwidths[i] @ bandwidths[i].T for i in idx]
        svg = density_svg(xs, ys, field, samples.points,
                          [samples.points[i] for i in idx], covs,
                          header=cfg.header())
        _write(out / f"estimate{tag}.svg", svg)


def cmd_estimate(args) -> int:
    cfg = _load_config(args.config, args.seed)
    samples = load_samples(args.samples)
    est0 = VkdeEstimate(samples, silverman_init(samples))
    access = DensityAccess.from_estimate(est0)
    bandwidths = select_all(cfg.selector, access, samples.points, n_samples=samples.n)
    _estimate_outputs(cfg, samples, bandwidths, Path(args.out), "", args.svg)
    return 0


def cmd_iterate(args) -> int:
    cfg = _load_config(args.config, args.seed)
    samples = load_samples(args.samples)
    steps = cfg.steps if args.steps is None else int(args.steps)
    trace = iterate_bandwidths(samples, cfg.selector, steps=steps)
    out = Path(args.out)
    for k, bw in enumerate(trace.iterates):
        _estimate_outputs(cfg, samples, bw, out, f"_step{k}", args.svg)
    lines = trace.to_csv().splitlines()
    _write(out / "trace.csv", "\n".join([f"# {cfg.header()}", *lines]) + "\n")
    residuals = "\n".join(
        [f"# {cfg.header()}", "k,residual"]
        + [f"{k + 1},{r:.17g}" for k, r in enumerate(trace.residuals)]
    )
    _write(out / "residuals.csv", residuals + "\n")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args.config, args.seed)
    truth = banana_density()
    grid = QuadratureGrid(cfg.grid_axes) if cfg.grid_axes else None
    report = run_benchmark(truth, n=cfg.bench_n, reps=cfg.bench_reps, seed=cfg.seed, grid=grid)
    out = Path(args.out)
    _write(out / "benchmark.json", f"// {cfg.header()}\n" + report.to_json() + "\n")
    _write(out / "benchmark.txt", f"# {cfg.header()}\n" + report.to_text())
    return 0


def cmd_invariance(args) -> int:
    cfg = _load_config(args.config, args.seed)
    report = invariance_report(cfg.selector)
    out = Path(args.out)
    _write(out / "invariance.json", report.to_json() + "\n")
    summary = ", ".join(
        f"{name}:{'pass' if chk.passed else 'FAIL'}" for name, chk in sorted(report.checks.items())
    )
    print(f"[{selector_to_dict(cfg.selector)['kind']}] {summary}")
    return 0 if report.all_passed else 1


def cmd_quakes(args) -> int:
    cfg = _load_config(args.config, args.seed)
    cols = tuple(int(c) for c in args.quake_cols.split(","))
    if len(cols) != 3:
        raise ConfigError("--quake-cols needs three comma-separated column indices MAG,LAT,LON")
    samples = load_quakes(args.samples, cfg.quake_filter, columns=cols)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_samples(samples, out / "quake_samples.csv", header=["lon", "lat"])
    print(f"{samples.n} samples after filtering")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vkde", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, samples=False):
        p.add_argument("--config", default=None, help="JSON configuration document")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if samples:
            p.add_argument("--samples", required=True, help="sample CSV (or catalog) path")

    p_est = sub.add_parser("estimate", help="single selection pass and density export")
    common(p_est, samples=True)
    p_est.add_argument("--svg", action="store_true", help="write the contour/ellipse SVG")
    p_est.set_defaults(func=cmd_estimate)

    p_it = sub.add_parser("iterate", help="bandwidth fixed-point iteration")
    common(p_it, samples=True)
    p_it.add_argument("--steps", type=int, default=None, help="override the config step count")
    p_it.add_argument("--svg", action="store_true")
    p_it.set_defaults(func=cmd_iterate)

    p_bench = sub.add_parser("bench", help="Monte-Carlo MISE benchmark")
    common(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_inv = sub.add_parser("invariance", help="invariance-axiom conformance report")
    common(p_inv)
    p_inv.set_defaults(func=cmd_invariance)

    p_q = sub.add_parser("quakes", help="filter an earthquake catalog")
    common(p_q, samples=True)
    p_q.add_argument("--quake-cols", default="0,1,2",
                     help="column indices MAG,LAT,LON (default 0,1,2)")
    p_q.set_defaults(func=cmd_quakes)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ParseError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3
    except (DomainError, ConvergenceError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
