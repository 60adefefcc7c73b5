"""Scenario configuration, one-day runs of all strategies, and parameter sweeps."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .blocks import ribbonize_all, to_mb
from .delay import DelayParams, average_delay, no_cache_delay
from .demand import (TABLE_I_DENSITY, Catalog, ConfigurationError, DensityProfile, PopularityRanges,
                     generate_catalog, sample_region_users)
from .geometry import (MIN_COMPRESS, CoverageMap, GeometryError, SbsLayout, build_coverage_map,
                       compress_for_overlap, generate_hex_layout, generate_random_layout,
                       hex_patch_areas)
from .mechanism import (MechanismConfig, MechanismState, cache_greedy, cache_highest_popularity,
                        run_hour)

log = logging.getLogger(__name__)

STRATEGIES = ("mechanism", "nocache", "highestpop", "greedy")
LAYOUT_KINDS = ("hex", "random", "explicit")


@dataclass(frozen=True)
class LayoutSpec:
    """Hex grid (by compress factor or target overlap), random, or explicit centers."""

    kind: str = "hex"
    compress: float | None = None
    overlap: float | None = 0.54
    bounds: tuple = (400.0, 300.0)
    seed: int = 0
    positions: tuple | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    layout: LayoutSpec = field(default_factory=LayoutSpec)
    radius: float = 50.0
    sbs_count: int = 24
    capacity_gb: float | tuple = 100.0
    providers: int = 5
    contents: int = 2000
    block_size_gb: float = 2.0
    omega: float = 0.0
    alpha: float = 100.0
    beta1: float = 1.0
    beta2: float = 5.0
    beta3: float = 0.0
    popularity: PopularityRanges = field(default_factory=PopularityRanges)
    mu: float = 1.0
    sigma: float = 0.5
    density: tuple = tuple(TABLE_I_DENSITY.tolist())
    hours: int = 24
    seed: int = 0
    resolution: float = 0.25
    strategies: tuple = STRATEGIES

    @classmethod
    def full_scale(cls, **overrides) -> "ScenarioConfig":
        """The full-size setting: K=10000, H=1000 GB, S=20 GB."""
        base = dict(contents=10000, capacity_gb=1000.0, block_size_gb=20.0)
        base.update(overrides)
        return cls(**base)

    # -- validation

    def problems(self) -> list[str]:
        out = []

        def need(ok, name, msg):
            if not ok:
                out.append(f"{name}: {msg}")

        lay = self.layout
        need(lay.kind in LAYOUT_KINDS, "layout.kind", f"must be one of {LAYOUT_KINDS}, got {lay.kind!r}")
        if lay.kind == "hex":
            need((lay.compress is None) != (lay.overlap is None), "layout",
                 "hex layouts need exactly one of compress or overlap")
            if lay.compress is not None:
                need(MIN_COMPRESS - 1e-12 <= lay.compress <= 1.0, "layout.compress",
                     f"must lie in [1/sqrt(3), 1], got {lay.compress}")
            if lay.overlap is not None:
                need(lay.overlap >= 0, "layout.overlap", f"must be >= 0, got {lay.overlap}")
        elif lay.kind == "random":
            need(len(lay.bounds) in (2, 4), "layout.bounds", "needs (width, height) or (x0, y0, x1, y1)")
        elif lay.kind == "explicit":
            need(lay.positions is not None and len(lay.positions) == self.sbs_count, "layout.positions",
                 f"needs {self.sbs_count} (x, y) pairs")
        need(self.radius > 0, "radius", f"must be positive, got {self.radius}")
        need(self.sbs_count >= 1, "sbs_count", f"must be >= 1, got {self.sbs_count}")
        caps = np.atleast_1d(np.asarray(self.capacity_gb, dtype=float))
        need(len(caps) in (1, self.sbs_count), "capacity_gb", f"needs 1 or {self.sbs_count} values")
        need(np.all(caps > 0), "capacity_gb", "must be positive")
        need(self.providers >= 1, "providers", f"must be >= 1, got {self.providers}")
        need(self.contents >= self.providers, "contents", f"must be >= providers ({self.providers})")
        need(self.block_size_gb > 0 and to_mb(self.block_size_gb) >= 1, "block_size_gb", "must be positive")
        if self.block_size_gb > 0 and np.all(caps > 0) and len(caps) in (1, self.sbs_count):
            slots = int((np.array([to_mb(h) for h in caps]) // max(to_mb(self.block_size_gb), 1)).min())
            need(self.sbs_count <= slots, "capacity_gb",
                 f"smallest storage holds {slots} blocks; need at least sbs_count={self.sbs_count}")
        need(self.omega >= 0, "omega", f"must be >= 0, got {self.omega}")
        need(self.alpha >= 1, "alpha", f"must be >= 1, got {self.alpha}")
        for name in ("beta1", "beta2", "beta3"):
            need(getattr(self, name) >= 0, name, "must be >= 0")
        try:
            self.popularity.validate()
        except ConfigurationError as exc:
            out.append(f"popularity: {exc}")
        need(self.sigma > 0, "sigma", "must be positive")
        need(len(self.density) == 24, "density", f"needs 24 hourly values, got {len(self.density)}")
        need(all(d >= 0 for d in self.density), "density", "must be non-negative")
        need(self.hours >= 1, "hours", f"must be >= 1, got {self.hours}")
        need(self.resolution > 0, "resolution", "must be positive")
        bad = [s for s in self.strategies if s not in STRATEGIES]
        need(not bad, "strategies", f"unknown {bad}; choose from {STRATEGIES}")
        need("mechanism" in self.strategies, "strategies", "must include mechanism")
        return out

    def validate(self) -> "ScenarioConfig":
        problems = self.problems()
        if problems:
            raise ConfigurationError("invalid config:\n  " + "\n  ".join(problems))
        return self

    # -- serialization

    def to_dict(self) -> dict:
        lay = dataclasses.asdict(self.layout)
        lay["bounds"] = list(lay["bounds"])
        if lay["positions"] is not None:
            lay["positions"] = [list(p) for p in lay["positions"]]
        used = {"hex": ("kind", "compress", "overlap"), "random": ("kind", "bounds", "seed"),
                "explicit": ("kind", "positions")}.get(self.layout.kind, tuple(lay))
        lay = {k: lay[k] for k in used}
        caps = self.capacity_gb
        return {
            "seed": self.seed,
            "hours": self.hours,
            "layout": {k: v for k, v in lay.items() if v is not None},
            "radius": self.radius,
            "sbs_count": self.sbs_count,
            "resolution": self.resolution,
            "capacity_gb": list(caps) if isinstance(caps, (tuple, list)) else caps,
            "catalog": {
                "providers": self.providers,
                "contents": self.contents,
                "size_gb": list(self.popularity.size_gb),
                "scale": list(self.popularity.scale),
                "lifespan": list(self.popularity.lifespan),
                "upload": list(self.popularity.upload),
                "mu": self.mu,
                "sigma": self.sigma,
            },
            "mechanism": {"block_size_gb": self.block_size_gb, "omega": self.omega, "alpha": self.alpha},
            "delay": {"beta1": self.beta1, "beta2": self.beta2, "beta3": self.beta3},
            "density": list(self.density),
            "strategies": list(self.strategies),
        }

    @classmethod
    def from_dict(cls, data: dict | None) -> "ScenarioConfig":
        data = dict(data or {})
        unknown = []
        kw = {}
        sections = {
            "catalog": {"providers": "providers", "contents": "contents", "mu": "mu", "sigma": "sigma"},
            "mechanism": {"block_size_gb": "block_size_gb", "omega": "omega", "alpha": "alpha"},
            "delay": {"beta1": "beta1", "beta2": "beta2", "beta3": "beta3"},
        }
        pop = {}
        for section, keys in sections.items():
            sub = data.pop(section, None) or {}
            for key, value in sub.items():
                if key in keys:
                    kw[keys[key]] = value
                elif section == "catalog" and key in ("size_gb", "scale", "lifespan", "upload"):
                    pop[key] = tuple(float(v) for v in value)
                else:
                    unknown.append(f"{section}.{key}")
        if "layout" in data:
            lay = dict(data.pop("layout") or {})
            known = {f.name for f in dataclasses.fields(LayoutSpec)}
            unknown += [f"layout.{k}" for k in lay if k not in known]
            lay = {k: v for k, v in lay.items() if k in known}
            # the default overlap target only applies to hex grids sized by overlap
            if (lay.get("kind", "hex") != "hex" or "compress" in lay) and "overlap" not in lay:
                lay["overlap"] = None
            if "bounds" in lay:
                lay["bounds"] = tuple(float(v) for v in lay["bounds"])
            if lay.get("positions") is not None:
                lay["positions"] = tuple(tuple(float(v) for v in p) for p in lay["positions"])
            kw["layout"] = LayoutSpec(**lay)
        flat = {f.name for f in dataclasses.fields(cls)} - {"layout", "popularity"}
        for key, value in data.items():
            if key in flat:
                kw[key] = value
            else:
                unknown.append(key)
        if unknown:
            raise ConfigurationError("invalid config:\n  " + "\n  ".join(f"{k}: unknown field" for k in unknown))
        if pop:
            kw["popularity"] = PopularityRanges(**pop)
        for key in ("density", "strategies"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if isinstance(kw.get("capacity_gb"), list):
            kw["capacity_gb"] = tuple(float(h) for h in kw["capacity_gb"])
        return cls(**kw)

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigurationError(f"{path}: top level must be a mapping")
        return cls.from_dict(data)


# ---------------------------------------------------------------- building

@dataclass
class Scenario:
    config: ScenarioConfig
    layout: SbsLayout
    coverage: CoverageMap
    catalog: Catalog
    params: DelayParams
    mechanism: MechanismConfig
    profile: DensityProfile

    @property
    def capacities_mb(self) -> np.ndarray:
        return np.array([to_mb(h) for h in self.layout.capacities], dtype=np.int64)


def build_layout(config: ScenarioConfig) -> SbsLayout:
    lay, n, r = config.layout, config.sbs_count, config.radius
    caps = config.capacity_gb
    caps = np.asarray(caps, dtype=float) if isinstance(caps, (tuple, list)) else float(caps)
    if lay.kind == "hex":
        c = lay.compress if lay.compress is not None else compress_for_overlap(n, r, lay.overlap)
        return generate_hex_layout(n, r, c, capacity=caps)
    if lay.kind == "random":
        return generate_random_layout(n, r, lay.bounds, lay.seed, capacity=caps)
    return SbsLayout(np.array(lay.positions, dtype=float), r, caps)


def build_scenario(config: ScenarioConfig) -> Scenario:
    config.validate()
    try:
        layout = build_layout(config)
    except GeometryError as exc:
        raise ConfigurationError(f"invalid config:\n  layout: {exc}") from exc
    return Scenario(
        config=config,
        layout=layout,
        coverage=build_coverage_map(layout, config.resolution),
        catalog=generate_catalog(config.providers, config.contents, config.popularity,
                                 config.seed, config.mu, config.sigma),
        params=DelayParams(config.beta1, config.beta2, config.beta3),
        mechanism=MechanismConfig(config.block_size_gb, config.omega, config.alpha,
                                  config.hours, config.seed),
        profile=DensityProfile(np.array(config.density)),
    )


# ---------------------------------------------------------------- running

HOUR_COLUMNS = ("t", "users", "blocks", "D_mechanism", "D_nocache", "D_highestpop", "D_greedy",
                "lambda", "rounds", "iterations", "max_iterations", "iteration_bound", "mean_price",
                "max_price", "dropped_popularity")
SUMMARY_COLUMNS = ("hours", "D_mechanism", "D_nocache", "D_highestpop", "D_greedy", "lambda",
                   "mean_iterations", "max_iterations", "max_iteration_ratio")


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    hours: list[dict]
    summary: dict


def _mean(values):
    values = [v for v in values if v is not None]
    return sum(values) / len(values) if values else None


def summarize(hours: list[dict]) -> dict:
    """Daily figures recomputed from the per-hour rows."""
    out = {"hours": len(hours)}
    for s in STRATEGIES:
        out[f"D_{s}"] = _mean([h[f"D_{s}"] for h in hours])
    out["lambda"] = sum(h["lambda"] for h in hours)
    rounds = sum(h["rounds"] for h in hours)
    out["mean_iterations"] = sum(h["iterations"] for h in hours) / rounds if rounds else 0.0
    out["max_iterations"] = max((h["max_iterations"] for h in hours), default=0)
    ratios = [h["max_iterations"] / h["iteration_bound"] for h in hours if h["iteration_bound"]]
    out["max_iteration_ratio"] = max(ratios, default=0.0)
    return out


def run_scenario(config: ScenarioConfig, out: str | Path | None = None) -> ScenarioResult:
    """Run every requested strategy hour by hour on the same demand draws."""
    sc = build_scenario(config)
    caps = sc.capacities_mb
    state = MechanismState(sc.catalog, sc.coverage, caps, sc.params, sc.mechanism, sc.profile)
    rows = []
    for t in range(1, config.hours + 1):
        snapshot = ribbonize_all(sc.catalog, config.block_size_gb, t)
        users = sample_region_users(sc.coverage, sc.profile, t, config.seed)
        report = run_hour(state, t, snapshot, users)
        blocks = snapshot.blocks
        row = {
            "t": t,
            "users": users.total,
            "blocks": len(blocks),
            "D_mechanism": report.delay,
            "D_nocache": no_cache_delay(sc.coverage, users, sc.params) if "nocache" in config.strategies else None,
            "D_highestpop": None,
            "D_greedy": None,
            "lambda": report.replacement,
            "iterations": report.iterations,
            "rounds": len(report.rounds),
            "max_iterations": report.max_iterations,
            # alpha * N, with N the padded bidder count of a round
            "iteration_bound": config.alpha * max(len(blocks), config.sbs_count),
            "mean_price": report.mean_price,
            "max_price": max((r.max_price for r in report.rounds), default=0.0),
            "dropped_popularity": report.dropped_popularity,
        }
        if "highestpop" in config.strategies:
            alloc = cache_highest_popularity(blocks, caps, t)
            row["D_highestpop"] = average_delay(alloc, sc.coverage, users, sc.params)
        if "greedy" in config.strategies:
            alloc = cache_greedy(blocks, caps, sc.coverage, users, sc.params, t)
            row["D_greedy"] = average_delay(alloc, sc.coverage, users, sc.params)
        log.info("t=%d D=%s lambda=%.3f", t, row["D_mechanism"], row["lambda"])
        rows.append(row)
    result = ScenarioResult(config, rows, summarize(rows))
    if out is not None:
        write_result(result, out)
    return result


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def write_result(result: ScenarioResult, out) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "hours.csv", HOUR_COLUMNS, result.hours)
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, [result.summary])
    result.config.save(out / "config.yaml")


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- sweeps

AXES = {
    "H": "capacity_gb", "capacity": "capacity_gb", "capacity_gb": "capacity_gb",
    "K": "contents", "contents": "contents",
    "c": "compress", "compress": "compress",
    "O": "overlap", "overlap": "overlap",
    "omega": "omega", "alpha": "alpha", "beta3": "beta3",
    "S": "block_size_gb", "block_size_gb": "block_size_gb",
}
INTEGER_AXES = {"contents"}


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    seeds: int = 1

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigurationError(f"unknown sweep axis {self.axis!r}; choose from {sorted(AXES)}")
        if not self.values:
            raise ConfigurationError("sweep grid is empty")
        if self.seeds < 1:
            raise ConfigurationError(f"seeds must be >= 1, got {self.seeds}")

    @property
    def field(self) -> str:
        return AXES[self.axis]


def apply_axis(config: ScenarioConfig, axis: str, value, seed_offset: int = 0) -> ScenarioConfig:
    name = AXES[axis]
    value = int(value) if name in INTEGER_AXES else float(value)
    seed = config.seed + seed_offset
    if name == "compress":
        lay = dataclasses.replace(config.layout, kind="hex", compress=value, overlap=None)
        return dataclasses.replace(config, layout=lay, seed=seed)
    if name == "overlap":
        lay = dataclasses.replace(config.layout, kind="hex", compress=None, overlap=value)
        return dataclasses.replace(config, layout=lay, seed=seed)
    return dataclasses.replace(config, **{name: value, "seed": seed})


SWEEP_COLUMNS = ("axis", "value", "seed") + SUMMARY_COLUMNS[1:]


def _sweep_point(args):
    config, axis, value, index = args
    started = time.perf_counter()
    result = run_scenario(apply_axis(config, axis, value, index))
    row = {"axis": axis, "value": value, "seed": config.seed + index, **result.summary}
    return row, time.perf_counter() - started


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[dict]
    medians: list[dict]
    wall_time: list[float]


def sweep(config: ScenarioConfig, spec: SweepSpec, out=None, workers: int = 1,
          chart: bool = True) -> SweepResult:
    """One run per (axis value, replicate seed). Rows come out in grid order."""
    for value in spec.values:
        for i in range(spec.seeds):
            apply_axis(config, spec.axis, value, i).validate()
    jobs = [(config, spec.axis, v, i) for v in spec.values for i in range(spec.seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_sweep_point, jobs))
    else:
        done = [_sweep_point(job) for job in jobs]
    order = {v: k for k, v in enumerate(spec.values)}
    done.sort(key=lambda d: (order[d[0]["value"]], d[0]["seed"]))
    rows = [d[0] for d in done]
    medians = []
    for v in spec.values:
        group = [r for r in rows if r["value"] == v]
        med = {"axis": spec.axis, "value": v, "seed": "median"}
        for col in SUMMARY_COLUMNS[1:]:
            vals = [r[col] for r in group if r[col] is not None]
            med[col] = float(np.median(vals)) if vals else None
        medians.append(med)
    result = SweepResult(spec, rows, medians, [d[1] for d in done])
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows + medians)
        _write_csv(out / "timing.csv", ("axis", "value", "seed", "wall_s"),
                   [{"axis": r["axis"], "value": r["value"], "seed": r["seed"], "wall_s": w}
                    for r, w in zip(rows, result.wall_time)])
        if chart:
            plot_sweep(result, out / "sweep.svg")
    return result


AXIS_LABELS = {
    "capacity_gb": "storage capacity H (GB)", "contents": "number of contents K",
    "compress": "compress factor c", "overlap": "overlapping percentage O",
    "omega": "additional price coefficient omega", "alpha": "quantification accuracy alpha",
    "beta3": "choosing delay beta3 (ms)", "block_size_gb": "block size S (GB)",
}


def plot_sweep(result: SweepResult, path) -> None:
    """Median daily delay per strategy against the swept value (plus lambda for omega)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "cachemarket"
    x = [m["value"] for m in result.medians]
    with_lambda = result.spec.field == "omega"
    fig, axes = plt.subplots(1, 2 if with_lambda else 1, figsize=(9 if with_lambda else 5, 3.6))
    ax = axes[0] if with_lambda else axes
    for s in STRATEGIES:
        y = [m[f"D_{s}"] for m in result.medians]
        if any(v is not None for v in y):
            ax.plot(x, [np.nan if v is None else v for v in y], marker="o", label=s)
    ax.set_xlabel(AXIS_LABELS[result.spec.field])
    ax.set_ylabel("average delay D (ms)")
    ax.legend(fontsize=8)
    if with_lambda:
        axes[1].plot(x, [m["lambda"] for m in result.medians], marker="s", color="k")
        axes[1].set_xlabel(AXIS_LABELS["omega"])
        axes[1].set_ylabel("replacement percentage lambda")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------- geometry oracle

def geometry_oracle(radius: float = 50.0, compresses=(0.6, 0.7, 0.8, 0.9), samples: int = 400_000,
                    seed: int = 0, resolution: float = 0.25) -> list[dict]:
    """Lens and triple-patch areas: closed form vs Monte Carlo vs grid sampling."""
    rng = np.random.default_rng(seed)
    rows = []
    for c in compresses:
        theta = math.acos(c)
        exact = hex_patch_areas(radius, theta)
        d = 2 * radius * c
        tri = np.array([[0.0, 0.0], [d, 0.0], [d / 2, d * math.sqrt(3) / 2]])
        pts = rng.uniform(-radius, radius, size=(samples, 2))
        box = (2 * radius) ** 2
        inside = [np.hypot(*(pts - p).T) < radius for p in tri]
        mc2 = box * np.mean(inside[0] & inside[1])
        mc3 = box * np.mean(inside[0] & inside[1] & inside[2])
        grid = build_coverage_map(SbsLayout(tri, radius, 1.0), resolution)
        rows.append({
            "compress": c,
            "theta": theta,
            "A2_exact": exact.a2,
            "A2_monte_carlo": mc2,
            "A2_grid": grid.intersection_area((0, 1)),
            "A3_exact": exact.a3,
            "A3_monte_carlo": mc3,
            "A3_grid": grid.intersection_area((0, 1, 2)),
        })
    return rows
