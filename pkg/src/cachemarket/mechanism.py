"""Hourly caching mechanism: a series of multi-object auctions per hour.

Every hour the SP catalogs are re-cut into equal blocks. Round ``j`` offers the
``j``-th storage block of every SBS that has one; all content blocks bid their
marginal delay reduction minus a replacement penalty, and the market matching
decides the winners. Between rounds the allocation (and so the marginal
valuations) is updated.

Baselines living here too: highest popularity, greedy, and no caching.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .auction import MatchingResult, market_match, quantize
from .blocks import ContentBlock, RangeSet, RibbonSnapshot, overlap_matrix, ribbonize_all, to_mb
from .delay import AllocationState, DelayParams, average_delay, backhaul_delay, downlink_delays
from .demand import Catalog, ConfigurationError, DensityProfile, RegionUserCounts, sample_region_users
from .geometry import CoverageMap

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MechanismConfig:
    block_size: float = 2.0  # S, GB
    omega: float = 0.0
    alpha: float = 100.0
    hours: int = 24
    seed: int = 0

    @property
    def block_size_mb(self) -> int:
        return to_mb(self.block_size)

    def validate(self, capacities_mb=None) -> None:
        if not self.block_size > 0 or self.block_size_mb < 1:
            raise ConfigurationError(f"block size must be positive, got {self.block_size}")
        if self.omega < 0:
            raise ConfigurationError(f"omega must be >= 0, got {self.omega}")
        if self.alpha < 1:
            raise ConfigurationError(f"alpha must be >= 1, got {self.alpha}")
        if self.hours < 1:
            raise ConfigurationError(f"hours must be >= 1, got {self.hours}")
        if capacities_mb is not None:
            slots = np.asarray(capacities_mb) // self.block_size_mb
            if len(slots) > slots.min():
                raise ConfigurationError(
                    f"{len(slots)} SBSs but the smallest storage holds only {int(slots.min())} blocks"
                    f" of {self.block_size} GB; need I <= min H_i / S"
                )


def storage_slots(capacities_mb, block_size_mb: int) -> np.ndarray:
    return np.asarray(capacities_mb, dtype=np.int64) // block_size_mb


# ---------------------------------------------------------------- valuations

def _uncached_delays(cached, coverage: CoverageMap, users: RegionUserCounts, params: DelayParams):
    """Best delay per (block, region) without the choosing term."""
    back = backhaul_delay(users, params)
    down = downlink_delays(users, params)
    out = np.empty((cached.shape[0], len(coverage.regions)))
    for j, region in enumerate(coverage.regions):
        members = list(region.sbs)
        out[:, j] = (down[members][None, :] + (~cached[:, members]) * back).min(axis=1)
    return out


class ValuationModel:
    """Marginal valuations for all (block, SBS) pairs, updated as blocks get cached."""

    def __init__(self, alloc: AllocationState, coverage: CoverageMap, users: RegionUserCounts,
                 params: DelayParams, popularity=None):
        self.coverage = coverage
        self.phi = (np.array([b.popularity for b in alloc.blocks], dtype=float)
                    if popularity is None else np.asarray(popularity, dtype=float))
        self.down = downlink_delays(users, params)
        self.weights = users.per_region.astype(float)
        self.current = _uncached_delays(alloc.cached, coverage, users, params)
        inc = coverage.incidence
        self._weighted = inc * self.weights[:, None]
        self.regions_of = [np.flatnonzero(inc[:, i]) for i in range(coverage.sbs_count)]
        self.values = np.column_stack([self._column(i) for i in range(coverage.sbs_count)]) \
            if coverage.sbs_count else np.zeros((len(self.phi), 0))

    def _column(self, i: int, rows=slice(None)) -> np.ndarray:
        regions = self.regions_of[i]
        gain = np.maximum(0.0, self.current[rows][:, regions] - self.down[i])
        return self.phi[rows] * (gain @ self.weights[regions])

    def cache(self, block: int, sbs: int) -> None:
        regions = self.regions_of[sbs]
        self.current[block, regions] = np.minimum(self.current[block, regions], self.down[sbs])
        gain = np.maximum(0.0, self.current[block][:, None] - self.down[None, :])
        self.values[block] = self.phi[block] * (gain * self._weighted).sum(axis=0)


def marginal_valuation(block: int, sbs: int, alloc: AllocationState, coverage: CoverageMap,
                       users: RegionUserCounts, params: DelayParams) -> float:
    """Popularity-weighted total delay saved if ``block`` is also cached at ``sbs``."""
    if alloc.cached[block, sbs]:
        return 0.0
    back = backhaul_delay(users, params)
    down = downlink_delays(users, params)
    phi = alloc.blocks[block].popularity
    total = 0.0
    for j, region in enumerate(coverage.regions):
        if sbs not in region.sbs:
            continue
        now = min(down[i] + (0.0 if alloc.cached[block, i] else back) for i in region.sbs)
        total += max(0.0, now - down[sbs]) * users.per_region[j]
    return float(phi * total)


def marginal_valuations(alloc: AllocationState, coverage: CoverageMap, users: RegionUserCounts,
                        params: DelayParams) -> np.ndarray:
    return ValuationModel(alloc, coverage, users, params).values.copy()


def additional_price(eps, omega: float, theta_back: float):
    """Replacement penalty ``omega * (1 - eps) * theta_back``; arrays broadcast."""
    out = omega * (1.0 - np.asarray(eps, dtype=float)) * theta_back
    return float(out) if np.ndim(out) == 0 else out


def replacement_percentage(alloc: AllocationState, eps: np.ndarray, capacities_mb) -> float:
    """Mean over SBSs of the share of storage rewritten with data absent last hour."""
    cap = np.asarray(capacities_mb, dtype=float)
    sizes = np.array([b.size_mb for b in alloc.blocks], dtype=float)
    fresh = ((1.0 - eps) * alloc.cached * sizes[:, None]).sum(axis=0)
    return float(np.mean(fresh / cap))


# ---------------------------------------------------------------- state

class ReplacementTracker:
    """Byte ranges each SBS held last hour, and this hour's overlap fractions."""

    def __init__(self, sbs_count: int):
        self.previous = [RangeSet() for _ in range(sbs_count)]
        self.eps: np.ndarray | None = None
        self.last: float | None = None

    def overlap(self, blocks) -> np.ndarray:
        self.eps = overlap_matrix(blocks, self.previous)
        return self.eps

    def roll(self, alloc: AllocationState, replacement: float) -> None:
        self.previous = [r.copy() for r in alloc.ranges]
        self.last = replacement


@dataclass
class RoundStats:
    round: int
    objects: int
    iterations: int
    welfare: float
    written: int
    mean_price: float
    max_price: float


@dataclass
class HourReport:
    t: int
    delay: float | None
    replacement: float
    rounds: list[RoundStats]
    dropped_mb: int
    dropped_popularity: float
    allocation: AllocationState = field(repr=False)

    @property
    def iterations(self) -> int:
        return sum(r.iterations for r in self.rounds)

    @property
    def max_iterations(self) -> int:
        return max((r.iterations for r in self.rounds), default=0)

    @property
    def mean_price(self) -> float:
        prices = [r.mean_price for r in self.rounds]
        return float(np.mean(prices)) if prices else 0.0


@dataclass
class HourContext:
    """Everything fixed for one hour: blocks, users, overlaps, penalties."""

    t: int
    snapshot: RibbonSnapshot
    users: RegionUserCounts
    eps: np.ndarray
    penalty: np.ndarray
    alloc: AllocationState
    model: ValuationModel


class MechanismState:
    """Carries the allocation across rounds and the tracker across hours."""

    def __init__(self, catalog: Catalog, coverage: CoverageMap, capacities_mb, params: DelayParams,
                 config: MechanismConfig, profile: DensityProfile = DensityProfile()):
        self.catalog = catalog
        self.coverage = coverage
        self.capacities_mb = np.asarray(capacities_mb, dtype=np.int64)
        self.params = params
        self.config = config
        self.profile = profile
        config.validate(self.capacities_mb)
        self.slots = storage_slots(self.capacities_mb, config.block_size_mb)
        self.tracker = ReplacementTracker(coverage.sbs_count)
        self.hour: HourContext | None = None

    @property
    def rounds(self) -> int:
        return int(self.slots.max())

    def begin_hour(self, t: int, snapshot: RibbonSnapshot | None = None,
                   users: RegionUserCounts | None = None) -> HourContext:
        if snapshot is None:
            snapshot = ribbonize_all(self.catalog, self.config.block_size, t)
        if users is None:
            users = sample_region_users(self.coverage, self.profile, t, self.config.seed)
        eps = self.tracker.overlap(snapshot.blocks)
        penalty = additional_price(eps, self.config.omega, backhaul_delay(users, self.params))
        alloc = AllocationState(t, snapshot.blocks, self.capacities_mb)
        model = ValuationModel(alloc, self.coverage, users, self.params)
        self.hour = HourContext(int(t), snapshot, users, eps, np.asarray(penalty), alloc, model)
        return self.hour


def run_round(state: MechanismState, j: int) -> RoundStats:
    """One auction: the ``j``-th storage block of every SBS that has one."""
    ctx = state.hour
    if ctx is None:
        raise RuntimeError("begin_hour() must be called before run_round()")
    if not 1 <= j <= state.rounds:
        raise ValueError(f"round {j} outside 1..{state.rounds}")
    objects = np.flatnonzero(state.slots >= j)
    net = np.maximum(0.0, ctx.model.values[:, objects] - ctx.penalty[:, objects])
    n_blocks = net.shape[0]
    if n_blocks < len(objects):
        net = np.vstack([net, np.zeros((len(objects) - n_blocks, len(objects)))])
    result: MatchingResult = market_match(quantize(net, state.config.alpha))
    written = 0
    for n in range(n_blocks):
        k = result.assignment[n]
        # zero-value wins only exist to complete the matching
        if k >= 0 and net[n, k] > 0:
            sbs = int(objects[k])
            ctx.alloc.cache(n, sbs)
            ctx.model.cache(n, sbs)
            written += 1
    prices = result.prices
    return RoundStats(j, len(objects), result.iterations, result.welfare, written,
                      float(prices.mean()) if len(prices) else 0.0,
                      float(prices.max()) if len(prices) else 0.0)


def run_hour(state: MechanismState, t: int, snapshot: RibbonSnapshot | None = None,
             users: RegionUserCounts | None = None) -> HourReport:
    ctx = state.begin_hour(t, snapshot, users)
    rounds = [run_round(state, j) for j in range(1, state.rounds + 1)]
    ctx.alloc.check()
    delay = average_delay(ctx.alloc, state.coverage, ctx.users, state.params)
    replacement = replacement_percentage(ctx.alloc, ctx.eps, state.capacities_mb)
    state.tracker.roll(ctx.alloc, replacement)
    dropped = sum(ctx.snapshot.dropped_mb.values())
    log.debug("hour %d: D=%s lambda=%.4f iterations=%d", t, delay, replacement,
              sum(r.iterations for r in rounds))
    return HourReport(int(t), delay, replacement, rounds, int(dropped),
                      ctx.snapshot.dropped_popularity, ctx.alloc)


# ---------------------------------------------------------------- baselines

def no_cache(blocks, capacities_mb, t: int = 0) -> AllocationState:
    return AllocationState(t, blocks, capacities_mb)


def cache_highest_popularity(blocks, capacities_mb, t: int = 0) -> AllocationState:
    """Every SBS stores the globally most popular blocks that fit."""
    alloc = AllocationState(t, blocks, capacities_mb)
    if not blocks:
        return alloc
    phi = np.array([b.popularity for b in blocks])
    ranked = np.argsort(-phi, kind="stable")
    for i in range(alloc.sbs_count):
        for n in ranked:
            if blocks[n].size_mb > alloc.free_mb(i):
                break
            alloc.cache(int(n), i)
    return alloc


def cache_greedy(blocks, capacities_mb, coverage: CoverageMap, users: RegionUserCounts,
                 params: DelayParams, t: int = 0) -> AllocationState:
    """Repeatedly cache the single (block, SBS) pair with the largest marginal valuation.

    Stops when storages are full or no pair would lower the delay any more.
    """
    alloc = AllocationState(t, blocks, capacities_mb)
    if not blocks:
        return alloc
    model = ValuationModel(alloc, coverage, users, params)
    sizes = np.array([b.size_mb for b in blocks])
    values = model.values
    while True:
        free = alloc.capacity_mb - alloc.used_mb
        fits = sizes[:, None] <= free[None, :]
        masked = np.where(fits & ~alloc.cached, values, -np.inf)
        flat = int(np.argmax(masked))
        n, i = divmod(flat, masked.shape[1])
        if not masked[n, i] > 0:
            break
        alloc.cache(n, i)
        model.cache(n, i)
    return alloc
