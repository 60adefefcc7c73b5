"""Linear delay model and the hourly average-delay objective.

Delay is evaluated per content block: a block is atomic, so a request for it
is served entirely by the best covering SBS. ``phi_sum`` is taken over blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import ContentBlock, RangeSet
from .demand import RegionUserCounts
from .geometry import CoverageMap, SimplestRegion


class CapacityError(RuntimeError):
    """A write would exceed an SBS's storage capacity."""


@dataclass(frozen=True)
class DelayParams:
    """Milliseconds per user (backhaul, downlink) and per covering SBS (choosing)."""

    beta1: float = 1.0
    beta2: float = 5.0
    beta3: float = 0.0

    def __post_init__(self):
        if min(self.beta1, self.beta2, self.beta3) < 0:
            raise ValueError("delay coefficients must be non-negative")


def backhaul_delay(users: RegionUserCounts, params: DelayParams) -> float:
    return params.beta1 * users.total


def downlink_delay(sbs: int, users: RegionUserCounts, params: DelayParams) -> float:
    return params.beta2 * float(users.per_sbs[sbs])


def downlink_delays(users: RegionUserCounts, params: DelayParams) -> np.ndarray:
    return params.beta2 * users.per_sbs.astype(float)


def choosing_delay(region: SimplestRegion, params: DelayParams) -> float:
    return params.beta3 * len(region.sbs)


class AllocationState:
    """Which blocks each SBS holds during one hour.

    ``cached`` is a (blocks x SBSs) boolean matrix; ``ranges[i]`` keeps the
    byte ranges written to SBS ``i`` so the next hour can measure overlap.
    """

    def __init__(self, hour: int, blocks, capacity_mb):
        self.hour = hour
        self.blocks = tuple(blocks)
        self.capacity_mb = np.asarray(capacity_mb, dtype=np.int64)
        n_sbs = len(self.capacity_mb)
        self.cached = np.zeros((len(self.blocks), n_sbs), dtype=bool)
        self.used_mb = np.zeros(n_sbs, dtype=np.int64)
        self.ranges = [RangeSet() for _ in range(n_sbs)]

    @property
    def sbs_count(self) -> int:
        return len(self.capacity_mb)

    def free_mb(self, sbs: int) -> int:
        return int(self.capacity_mb[sbs] - self.used_mb[sbs])

    def cache(self, block: int, sbs: int) -> None:
        if self.cached[block, sbs]:
            raise ValueError(f"block {block} already cached at SBS {sbs}")
        b = self.blocks[block]
        if self.used_mb[sbs] + b.size_mb > self.capacity_mb[sbs]:
            raise CapacityError(
                f"SBS {sbs}: {self.used_mb[sbs]} + {b.size_mb} MB exceeds {self.capacity_mb[sbs]} MB"
            )
        self.cached[block, sbs] = True
        self.used_mb[sbs] += b.size_mb
        self.ranges[sbs].add_block(b)

    def check(self) -> None:
        sizes = np.array([b.size_mb for b in self.blocks], dtype=np.int64)
        used = sizes @ self.cached if len(sizes) else np.zeros(self.sbs_count, dtype=np.int64)
        assert np.array_equal(used, self.used_mb)
        assert np.all(self.used_mb <= self.capacity_mb)
        for n, i in zip(*np.nonzero(self.cached)):
            assert self.ranges[i].contains_block(self.blocks[n])


def _region_members(coverage: CoverageMap):
    return [np.array(r.sbs, dtype=np.int64) for r in coverage.regions]


def best_delays(cached: np.ndarray, coverage: CoverageMap, users: RegionUserCounts,
                params: DelayParams, include_choosing: bool = True) -> np.ndarray:
    """``out[b, j]``: delay of a request for block ``b`` from region ``j``."""
    back = backhaul_delay(users, params)
    down = downlink_delays(users, params)
    out = np.empty((cached.shape[0], len(coverage.regions)))
    for j, members in enumerate(_region_members(coverage)):
        cand = down[members][None, :] + (~cached[:, members]) * back
        out[:, j] = cand.min(axis=1)
        if include_choosing:
            out[:, j] += params.beta3 * len(members)
    return out


def request_delay(block: int, region: SimplestRegion, alloc: AllocationState,
                  users: RegionUserCounts, params: DelayParams) -> float:
    back = backhaul_delay(users, params)
    best = min(
        downlink_delay(i, users, params) + (0.0 if alloc.cached[block, i] else back)
        for i in region.sbs
    )
    return best + choosing_delay(region, params)


def average_delay(alloc: AllocationState, coverage: CoverageMap, users: RegionUserCounts,
                  params: DelayParams, popularity=None) -> float | None:
    """Popularity- and user-weighted mean request delay (ms).

    Returns ``None`` when there is no demand (no users or zero total
    popularity), where the average is undefined.
    """
    phi = np.array([b.popularity for b in alloc.blocks]) if popularity is None else np.asarray(popularity)
    phi_sum = float(phi.sum())
    u_sum = users.total
    if u_sum == 0 or phi_sum == 0:
        return None
    delays = best_delays(alloc.cached, coverage, users, params)
    return float(phi @ delays @ users.per_region) / (phi_sum * u_sum)


def no_cache_delay(coverage: CoverageMap, users: RegionUserCounts, params: DelayParams) -> float | None:
    """Average delay with empty caches; independent of the block set."""
    u_sum = users.total
    if u_sum == 0:
        return None
    back = backhaul_delay(users, params)
    down = downlink_delays(users, params)
    per_region = np.array([down[list(r.sbs)].min() + back + params.beta3 * len(r.sbs)
                           for r in coverage.regions])
    return float(per_region @ users.per_region) / u_sum
