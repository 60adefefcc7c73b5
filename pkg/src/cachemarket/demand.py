"""Content catalogs with time-varying popularity, and per-region user draws."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .geometry import CoverageMap

# users per m^2, hours 1..24
TABLE_I_DENSITY = np.array([
    380, 210, 110, 110, 140, 200, 300, 650, 1100, 1260, 1400, 1570,
    1530, 1370, 1310, 1250, 900, 800, 940, 1100, 1200, 1070, 610, 450,
], dtype=float) / 1e5

MB_PER_GB = 1000

# spawn-key roots of the per-scenario RNG tree
CATALOG_STREAM = 0
USERS_STREAM = 1


class ConfigurationError(ValueError):
    pass


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for node ``key`` of the seed tree rooted at ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class DensityProfile:
    values: np.ndarray = field(default_factory=lambda: TABLE_I_DENSITY.copy())

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (24,):
            raise ConfigurationError(f"density profile needs 24 hourly entries, got {values.shape}")
        if np.any(values < 0):
            raise ConfigurationError("density entries must be non-negative")
        object.__setattr__(self, "values", values)

    def __call__(self, t: int) -> float:
        # entry 1 is hour 1; multi-day runs cycle the table
        return float(self.values[(int(t) - 1) % 24])


@dataclass(frozen=True)
class PopularityRanges:
    size_gb: tuple[float, float] = (0.1, 1.0)
    scale: tuple[float, float] = (0.0, 3.0)
    lifespan: tuple[float, float] = (4.0, 12.0)
    upload: tuple[float, float] = (-75.0, 25.0)

    def validate(self) -> None:
        for name in ("size_gb", "scale", "lifespan", "upload"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigurationError(f"empty range for {name}: [{lo}, {hi}]")
        if self.size_gb[0] <= 0:
            raise ConfigurationError("content sizes must be positive")
        if self.scale[0] < 0:
            raise ConfigurationError("popularity scale must be non-negative")
        if self.lifespan[0] <= 0:
            raise ConfigurationError("lifespan must be positive")


@dataclass(frozen=True)
class Content:
    sp: int
    id: int
    size: float
    a: float
    b: float
    t0: float


def lognormal_pdf(x, mu: float, sigma: float):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = np.exp(-((np.log(xp) - mu) ** 2) / (2 * sigma**2)) / (math.sqrt(2 * math.pi) * sigma * xp)
    return out


def content_popularity(content: Content, t: float, mu: float = 1.0, sigma: float = 0.5) -> float:
    """Request probability per user of ``content`` at hour ``t``."""
    return float(content.a * lognormal_pdf((t - content.t0) / content.b, mu, sigma))


@dataclass(frozen=True)
class Catalog:
    """Contents of all SPs, stored column-wise.

    Content ``k`` belongs to SP ``sp[k]``; sizes are kept in whole megabytes so
    byte-range bookkeeping stays exact.
    """

    sp: np.ndarray
    size_mb: np.ndarray
    a: np.ndarray
    b: np.ndarray
    t0: np.ndarray
    provider_count: int
    mu: float = 1.0
    sigma: float = 0.5

    def __len__(self) -> int:
        return len(self.sp)

    @property
    def sizes(self) -> np.ndarray:
        return self.size_mb / MB_PER_GB

    def popularity(self, t: float) -> np.ndarray:
        return self.a * lognormal_pdf((t - self.t0) / self.b, self.mu, self.sigma)

    def content(self, k: int) -> Content:
        return Content(int(self.sp[k]), int(k), float(self.sizes[k]),
                       float(self.a[k]), float(self.b[k]), float(self.t0[k]))

    def provider_contents(self, sp: int) -> np.ndarray:
        return np.flatnonzero(self.sp == sp)

    def provider_sizes(self) -> np.ndarray:
        return np.bincount(self.sp, minlength=self.provider_count)

    def to_dict(self) -> dict:
        return {
            "providers": self.provider_count,
            "mu": self.mu,
            "sigma": self.sigma,
            "contents": [
                {"sp": int(s), "size_mb": int(z), "a": float(a), "b": float(b), "t0": float(t0)}
                for s, z, a, b, t0 in zip(self.sp, self.size_mb, self.a, self.b, self.t0)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Catalog":
        rows = data["contents"]
        return cls(
            np.array([r["sp"] for r in rows], dtype=np.int64),
            np.array([r["size_mb"] for r in rows], dtype=np.int64),
            np.array([r["a"] for r in rows], dtype=float),
            np.array([r["b"] for r in rows], dtype=float),
            np.array([r["t0"] for r in rows], dtype=float),
            int(data["providers"]),
            float(data.get("mu", 1.0)),
            float(data.get("sigma", 0.5)),
        )

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path) -> "Catalog":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))


def generate_catalog(providers: int, contents: int, ranges: PopularityRanges = PopularityRanges(),
                     seed: int = 0, mu: float = 1.0, sigma: float = 0.5) -> Catalog:
    """Draw ``contents`` items spread round-robin over ``providers`` SPs.

    Parameters are drawn row by row from one stream, so the catalog for a
    smaller ``contents`` is a prefix of the larger one.
    """
    if not contents >= providers >= 1:
        raise ConfigurationError(f"need contents >= providers >= 1, got K={contents}, L={providers}")
    ranges.validate()
    u = stream(seed, CATALOG_STREAM).random((contents, 4))

    def scaled(col, bounds):
        lo, hi = bounds
        return lo + (hi - lo) * u[:, col]

    size_mb = np.maximum(1, np.rint(scaled(0, ranges.size_gb) * MB_PER_GB)).astype(np.int64)
    return Catalog(
        sp=np.arange(contents, dtype=np.int64) % providers,
        size_mb=size_mb,
        a=scaled(1, ranges.scale),
        b=scaled(2, ranges.lifespan),
        t0=scaled(3, ranges.upload),
        provider_count=providers,
        mu=mu,
        sigma=sigma,
    )


@dataclass(frozen=True)
class RegionUserCounts:
    hour: int
    per_region: np.ndarray
    per_sbs: np.ndarray

    @property
    def total(self) -> int:
        return int(self.per_region.sum())

    @classmethod
    def from_regions(cls, hour: int, per_region, coverage: CoverageMap) -> "RegionUserCounts":
        per_region = np.asarray(per_region)
        return cls(hour, per_region, per_region @ coverage.incidence.astype(per_region.dtype))


def sample_region_users(coverage: CoverageMap, profile: DensityProfile, t: int, seed: int) -> RegionUserCounts:
    """Poisson user counts per simplest region for hour ``t``.

    Each region draws from its own stream keyed by (hour, region), so adding
    regions never perturbs the others.
    """
    density = profile(t)
    counts = np.array([
        stream(seed, USERS_STREAM, int(t), j).poisson(density * area)
        for j, area in enumerate(coverage.areas)
    ], dtype=np.int64)
    return RegionUserCounts.from_regions(int(t), counts, coverage)
