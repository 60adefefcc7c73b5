import dataclasses
import itertools

import numpy as np
import pytest

from cachemarket.auction import quantize
from cachemarket.blocks import RibbonSnapshot, ribbonize_all
from cachemarket.delay import AllocationState, DelayParams, average_delay, no_cache_delay
from cachemarket.demand import Catalog, ConfigurationError, DensityProfile, RegionUserCounts
from cachemarket.experiments import build_scenario
from cachemarket.geometry import CoverageMap, SbsLayout, SimplestRegion, build_coverage_map
from cachemarket.mechanism import (
    MechanismConfig, MechanismState, ValuationModel, additional_price, cache_greedy,
    cache_highest_popularity, marginal_valuation, marginal_valuations, no_cache,
    replacement_percentage, run_hour, run_round,
)
from conftest import small_config
from oracles import make_blocks, random_instance


def two_sbs_world(users=(4, 2, 7)):
    regions = [SimplestRegion(0, (0,), 1.0), SimplestRegion(1, (0, 1), 1.0), SimplestRegion(2, (1,), 1.0)]
    cov = CoverageMap.from_regions(regions, 2, 1.0)
    return cov, RegionUserCounts.from_regions(1, np.array(users), cov)


def test_valuation_single_region_is_backhaul_saving():
    cov = CoverageMap.from_regions([SimplestRegion(0, (0,), 1.0)], 1, 1.0)
    users = RegionUserCounts.from_regions(1, np.array([10]), cov)
    alloc = AllocationState(1, make_blocks(2), [1000])
    p = DelayParams(1.0, 5.0, 3.0)
    phi = alloc.blocks[1].popularity
    assert marginal_valuation(1, 0, alloc, cov, users, p) == pytest.approx(10 * 10 * phi)
    alloc.cache(1, 0)
    assert marginal_valuation(1, 0, alloc, cov, users, p) == 0.0


def test_valuation_ignores_region_served_better_by_neighbor():
    # SBS 0 serves 6 users (down 30), SBS 1 serves 9 (down 45); back = 13
    cov, users = two_sbs_world()
    p = DelayParams(1.0, 5.0, 0.0)
    alloc = AllocationState(1, make_blocks(1), [1000, 1000])
    alloc.cache(0, 0)
    phi = alloc.blocks[0].popularity
    # region 1 already gets 30 via SBS 0, caching at SBS 1 (45) cannot help; region 2 saves 13
    assert marginal_valuation(0, 1, alloc, cov, users, p) == pytest.approx(phi * 13 * 7)


@pytest.mark.parametrize("seed", range(10))
def test_valuation_model_matches_scalar_definition(seed):
    rng = np.random.default_rng(seed)
    cov, users, alloc, _, params = random_instance(rng, 3, 6)
    model = ValuationModel(alloc, cov, users, params)
    for b, i in itertools.product(range(6), range(3)):
        assert model.values[b, i] == pytest.approx(marginal_valuation(b, i, alloc, cov, users, params),
                                                   rel=1e-12, abs=1e-12)
    # incremental update agrees with a fresh model
    free = np.argwhere(~alloc.cached)
    for b, i in free[:4]:
        alloc.cache(int(b), int(i))
        model.cache(int(b), int(i))
    assert np.allclose(model.values, marginal_valuations(alloc, cov, users, params))


def test_additional_price_examples():
    assert additional_price(1.0, 3.0, 10.0) == 0.0
    assert additional_price(0.3, 0.0, 10.0) == 0.0
    assert additional_price(0.25, 2.0, 10.0) == pytest.approx(15.0)
    assert additional_price(np.array([0.0, 1.0]), 1.0, 4.0).tolist() == [4.0, 0.0]


def test_replacement_percentage_examples():
    blocks = make_blocks(4, size=100)
    alloc = AllocationState(2, blocks, [200, 200])
    for b, i in [(0, 0), (1, 0), (2, 1), (3, 1)]:
        alloc.cache(b, i)
    assert replacement_percentage(alloc, np.ones((4, 2)), [200, 200]) == 0.0
    assert replacement_percentage(alloc, np.zeros((4, 2)), [200, 200]) == 1.0
    assert replacement_percentage(alloc, np.full((4, 2), 0.5), [200, 200]) == 0.5
    eps = np.zeros((4, 2))
    eps[2, 1] = eps[3, 1] = 1.0
    assert replacement_percentage(alloc, eps, [200, 200]) == 0.5


def snapshot_of(blocks, hour=1):
    size = blocks[0].size_mb
    return RibbonSnapshot(hour, size, tuple(blocks), {}, {}, 0.0)


def bare_state(cov, capacities, config, profile=DensityProfile()):
    cat = Catalog(np.zeros(1, dtype=int), np.ones(1, dtype=int), np.zeros(1), np.ones(1), np.zeros(1), 1)
    return MechanismState(cat, cov, capacities, DelayParams(), config, profile)


def test_round_allocation_is_welfare_maximal():
    cov, users = two_sbs_world((3, 5, 2))
    blocks = make_blocks(3, size=1000)
    cfg = MechanismConfig(block_size=1.0, alpha=1000)
    state = bare_state(cov, [2000, 2000], cfg)
    ctx = state.begin_hour(1, snapshot_of(blocks), users)
    net = ctx.model.values.copy()
    units = quantize(net, cfg.alpha).units
    run_round(state, 1)
    won = np.argwhere(ctx.alloc.cached)
    assert len(won) == 2
    best = max(units[p[0], 0] + units[p[1], 1] for p in itertools.permutations(range(3), 2))
    assert sum(units[b, i] for b, i in won) == best


def test_block_may_collect_copies_across_rounds():
    # one dominant block: first round it goes to one SBS, later rounds it adds copies elsewhere
    cov, users = two_sbs_world((10, 0, 10))
    blocks = make_blocks(3, size=1000)
    blocks[0] = dataclasses.replace(blocks[0], popularity=50.0)
    state = bare_state(cov, [2000, 2000], MechanismConfig(block_size=1.0))
    ctx = state.begin_hour(1, snapshot_of(blocks), users)
    run_round(state, 1)
    assert ctx.alloc.cached[0].sum() == 1
    run_round(state, 2)
    assert ctx.alloc.cached[0].sum() == 2


def test_zero_value_round_writes_nothing():
    cov, _ = two_sbs_world()
    users = RegionUserCounts.from_regions(1, np.zeros(3, dtype=int), cov)
    state = bare_state(cov, [2000, 2000], MechanismConfig(block_size=1.0))
    ctx = state.begin_hour(1, snapshot_of(make_blocks(3, size=1000)), users)
    stats = run_round(state, 1)
    assert stats.written == 0 and not ctx.alloc.cached.any()


def test_rounds_skip_exhausted_storages():
    cov, users = two_sbs_world()
    state = bare_state(cov, [2000, 4000], MechanismConfig(block_size=1.0))
    state.begin_hour(1, snapshot_of(make_blocks(8, size=1000)), users)
    assert state.rounds == 4
    assert [run_round(state, j).objects for j in (1, 2, 3, 4)] == [2, 2, 1, 1]
    with pytest.raises(ValueError):
        run_round(state, 5)


def test_fewer_blocks_than_storages_is_padded():
    cov, users = two_sbs_world()
    state = bare_state(cov, [2000, 2000], MechanismConfig(block_size=1.0))
    ctx = state.begin_hour(1, snapshot_of(make_blocks(1, size=1000)), users)
    stats = run_round(state, 1)
    assert stats.written == 1 and ctx.alloc.cached.sum() == 1


def test_config_requires_enough_slots():
    MechanismConfig(block_size=2.0).validate([100_000] * 24)
    with pytest.raises(ConfigurationError):
        MechanismConfig(block_size=10.0).validate([100_000] * 24)
    for bad in (dict(block_size=0.0), dict(omega=-1), dict(alpha=0.5), dict(hours=0)):
        with pytest.raises(ConfigurationError):
            MechanismConfig(**bad).validate()


@pytest.fixture(scope="module")
def small():
    return build_scenario(small_config())


def new_state(sc, **kw):
    cfg = dataclasses.replace(sc.mechanism, **kw)
    return MechanismState(sc.catalog, sc.coverage, sc.capacities_mb, sc.params, cfg, sc.profile)


def test_first_hour_fills_everything_with_new_data(small):
    state = new_state(small)
    rep = run_hour(state, 1)
    assert np.all(rep.allocation.used_mb == small.capacities_mb)
    assert rep.replacement == 1.0
    assert rep.delay is not None and rep.delay >= 0


def test_mechanism_never_worse_than_no_cache(small):
    state = new_state(small)
    for t in range(1, 6):
        snap = ribbonize_all(small.catalog, small.config.block_size_gb, t)
        rep = run_hour(state, t, snap)
        users = state.hour.users
        assert rep.delay <= no_cache_delay(small.coverage, users, small.params) + 1e-9
        rep.allocation.check()
        assert 0.0 <= rep.replacement <= 1.0


class StaticCatalog(Catalog):
    def popularity(self, t):
        return super().popularity(10.0)


def test_large_penalty_freezes_static_world(small):
    cat = small.catalog
    static = StaticCatalog(cat.sp, cat.size_mb, cat.a, cat.b, cat.t0, cat.provider_count)
    state = MechanismState(static, small.coverage, small.capacities_mb, small.params,
                           small.mechanism, DensityProfile(np.full(24, 0.01)))
    assert run_hour(state, 1).replacement == 1.0
    state.config = dataclasses.replace(small.mechanism, omega=1e6)
    for t in (2, 3, 4):
        before = [r.copy() for r in state.tracker.previous]
        rep = run_hour(state, t)
        assert rep.replacement == 0.0
        assert rep.allocation.used_mb.sum() > 0
        for i, ranges in enumerate(rep.allocation.ranges):
            for content, spans in ranges.items():
                assert all(before[i].overlap(content, a, b) == b - a for a, b in spans)


def test_single_sbs_degenerates_to_popularity_caching():
    sc = build_scenario(small_config(sbs_count=1))
    assert len(sc.coverage.regions) == 1
    state = new_state(sc, alpha=1e9)
    rep = run_hour(state, 8)
    phi = np.array([b.popularity for b in rep.allocation.blocks])
    top = np.argsort(-phi, kind="stable")[: state.rounds]
    assert set(np.flatnonzero(rep.allocation.cached[:, 0])) == set(top.tolist())


def test_highest_popularity_duplicates(small):
    blocks = ribbonize_all(small.catalog, 2.0, 9).blocks
    alloc = cache_highest_popularity(blocks, small.capacities_mb, 9)
    cols = alloc.cached.T
    assert all(np.array_equal(cols[0], c) for c in cols)
    phi = np.array([b.popularity for b in blocks])
    assert phi[cols[0]].min() >= phi[~cols[0]].max()
    assert not no_cache(blocks, small.capacities_mb).cached.any()


def test_greedy_first_pick_is_global_argmax(small):
    t = 9
    blocks = ribbonize_all(small.catalog, 2.0, t).blocks
    from cachemarket.demand import sample_region_users
    users = sample_region_users(small.coverage, small.profile, t, 0)
    empty = AllocationState(t, blocks, small.capacities_mb)
    values = marginal_valuations(empty, small.coverage, users, small.params)
    b, i = np.unravel_index(np.argmax(values), values.shape)
    one_slot = np.full(small.coverage.sbs_count, 2000)
    alloc = cache_greedy(blocks, one_slot, small.coverage, users, small.params, t)
    assert alloc.cached[b, i]


def test_greedy_diversifies_where_popularity_duplicates():
    layout = SbsLayout([[0, 0], [40, 0]], 50.0, 1.0)
    cov = build_coverage_map(layout, 0.5)
    users = RegionUserCounts.from_regions(1, np.rint(cov.areas * 0.01).astype(int), cov)
    blocks = make_blocks(4, size=1000)
    caps = [2000, 2000]
    p = DelayParams()
    greedy = cache_greedy(blocks, caps, cov, users, p)
    popular = cache_highest_popularity(blocks, caps)
    assert greedy.cached.any(axis=1).sum() > popular.cached.any(axis=1).sum()
    assert average_delay(greedy, cov, users, p) <= average_delay(popular, cov, users, p)
