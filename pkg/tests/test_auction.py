import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linear_sum_assignment

from cachemarket.auction import (
    ConstrictedSet, NotQuantizedError, PreferredGraph, ValuationMatrix, augment_or_constrict,
    market_match, quantize,
)
from oracles import brute_force_assignment


def envy_free(units, assignment, price_units, virtual):
    """Every content's won storage maximizes its profit, virtual ones included."""
    n, m = units.shape
    profit = units - price_units[None, :]
    best = np.maximum(profit.max(axis=1), -virtual if n > m else -np.inf)
    got = np.where(assignment >= 0, profit[np.arange(n), np.maximum(assignment, 0)], -virtual)
    return np.all(got == best)


def test_spec_examples():
    r = market_match([[3, 1], [2, 4]])
    assert r.assignment.tolist() == [0, 1] and r.prices.tolist() == [0, 0]
    assert r.welfare == 7 and r.iterations == 1
    r = market_match([[3, 1], [3, 1]])
    assert r.assignment.tolist() == [0, 1] and r.prices.tolist() == [2, 0]
    assert r.welfare == 4 and r.iterations == 2
    r = market_match(np.zeros((3, 3), dtype=int))
    assert r.iterations == 1 and r.welfare == 0
    assert sorted(r.assignment.tolist()) == [0, 1, 2]


def test_padding_with_virtual_storages():
    r = market_match([[5], [9], [7]])
    assert r.assignment.tolist() == [-1, 0, -1]
    assert r.welfare == 9
    # the runner-up bid sets the price
    assert r.prices.tolist() == [7]
    assert r.virtual_price == 0


def test_rejects_more_storages_than_contents():
    with pytest.raises(ValueError):
        market_match(np.ones((1, 2), dtype=int))


def test_rejects_unquantized_input():
    with pytest.raises(NotQuantizedError):
        market_match([[0.5, 1.0]])
    with pytest.raises(NotQuantizedError):
        ValuationMatrix(np.array([[0.5]]))
    with pytest.raises(ValueError):
        market_match([[-1, 2], [0, 0]])


def test_quantize():
    vm = quantize([[0.0, 2.5], [5.0, 1.24]], alpha=10)
    assert vm.quantum == 0.5
    assert vm.units.tolist() == [[0, 5], [10, 2]]
    assert quantize(np.zeros((2, 2)), 10).units.sum() == 0
    with pytest.raises(ValueError):
        quantize([[1.0]], 0.5)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.integers(1, n).flatmap(
    lambda m: arrays(np.int64, (n, m), elements=st.integers(0, 20)))))
def test_optimal_and_envy_free(values):
    r = market_match(values)
    assert r.welfare == brute_force_assignment(values.tolist())
    assert envy_free(values, r.assignment, r.price_units, int(round(r.virtual_price / r.quantum)))
    all_prices = np.append(r.price_units, r.virtual_price / r.quantum) if len(values) > values.shape[1] \
        else r.price_units
    assert all_prices.min() == 0
    won = r.assignment[r.assignment >= 0]
    assert len(set(won.tolist())) == len(won) == values.shape[1]
    assert r.iterations <= max(values.max(), 1) * len(values)


@pytest.mark.parametrize("seed", range(5))
def test_larger_instances_against_linear_sum_assignment(seed):
    rng = np.random.default_rng(seed)
    n, m = 120, 15
    values = rng.integers(0, 1000, (n, m))
    values[rng.random((n, m)) < 0.3] = 0
    r = market_match(values)
    rows, cols = linear_sum_assignment(values, maximize=True)
    assert r.welfare == values[rows, cols].sum()


def test_constricted_set_is_blocking():
    units = np.array([[3, 1], [3, 1], [3, 0]])
    units = np.hstack([units, np.zeros((3, 1), dtype=int)])
    graph = PreferredGraph.build(units, np.zeros(3, dtype=int), capacity=[1, 1, 1])
    a = np.full(3, -1)
    steps = 0
    while True:
        out = augment_or_constrict(graph, a)
        if isinstance(out, ConstrictedSet):
            break
        a = out
        steps += 1
    assert steps == 1
    # search from the lowest free content (1) reaches storage 0 and its mate 0
    assert out.contents.tolist() == [0, 1]
    assert out.storages.tolist() == [0]
    assert out.storage_capacity < len(out.contents)
    # neighborhood of the set is exactly the reported storages
    nbrs = np.flatnonzero(graph.adjacency[out.contents].any(axis=0))
    assert nbrs.tolist() == out.storages.tolist()


def test_trace_records_price_steps():
    r = market_match([[3, 1], [3, 1]], trace=True)
    assert len(r.trace) == 1
    assert r.trace[0]["step"] == 2
