"""Market matching: lowest market-clearing prices for a unit-demand auction.

Contents (rows) bid for storages (columns). Prices start at zero; each
iteration builds the preferred-storage graph, grows a maximum matching by
augmenting paths, and if the matching is not perfect raises the prices of the
storages in a constricted set by the smallest step that changes some content's
preferences, renormalizing so the cheapest storage costs zero.

All arithmetic runs on integer multiples of the valuation quantum, which is
what makes termination (and the iteration bound ``alpha * N``) hold.

The ``N - M`` virtual storages added to square the instance all have value 0
for every content. Whenever one of them is reachable in a search, all of them
are (equal value, equal price), so they enter constricted sets together and
their prices never separate. They are therefore stored as a single pool node
with capacity ``N - M``; searches and price steps on the pool are identical to
running them on the expanded square instance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

log = logging.getLogger(__name__)


class NotQuantizedError(ValueError):
    """Valuations are not integer multiples of a quantum."""


@dataclass(frozen=True)
class ValuationMatrix:
    """Valuations ``units * quantum`` with ``quantum = max / alpha``."""

    units: np.ndarray
    quantum: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        units = np.asarray(self.units)
        if units.ndim != 2:
            raise ValueError("valuations must be a 2-D array")
        if not np.issubdtype(units.dtype, np.integer):
            raise NotQuantizedError("valuation units must be integers")
        if units.size and units.min() < 0:
            raise ValueError("valuations must be non-negative")
        object.__setattr__(self, "units", units.astype(np.int64))

    @property
    def values(self) -> np.ndarray:
        return self.units * self.quantum

    @property
    def shape(self):
        return self.units.shape


def quantize(values, alpha: float) -> ValuationMatrix:
    """Round each value to the nearest multiple of ``max(values) / alpha``."""
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    values = np.asarray(values, dtype=float)
    if values.size and values.min() < 0:
        raise ValueError("valuations must be non-negative")
    vmax = float(values.max()) if values.size else 0.0
    if vmax == 0.0:
        return ValuationMatrix(np.zeros(values.shape, dtype=np.int64), 1.0, alpha)
    quantum = vmax / alpha
    return ValuationMatrix(np.rint(values / quantum).astype(np.int64), quantum, alpha)


def as_valuations(values) -> ValuationMatrix:
    if isinstance(values, ValuationMatrix):
        return values
    arr = np.asarray(values)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or not np.array_equal(arr, np.rint(arr)):
            raise NotQuantizedError("raw valuations must be integer-valued; use quantize()")
        arr = np.rint(arr).astype(np.int64)
    top = int(arr.max()) if arr.size else 0
    return ValuationMatrix(arr, 1.0, float(max(top, 1)))


@dataclass(frozen=True)
class PreferredGraph:
    """``adjacency[n, s]`` iff storage node ``s`` maximizes content ``n``'s profit.

    ``capacity[s]`` is 1 for an ordinary storage and larger for a pooled node.
    """

    adjacency: np.ndarray
    capacity: np.ndarray

    @classmethod
    def build(cls, units, prices, capacity=None) -> "PreferredGraph":
        profit = np.asarray(units) - np.asarray(prices)[None, :]
        adj = profit == profit.max(axis=1, keepdims=True)
        if capacity is None:
            capacity = np.ones(adj.shape[1], dtype=np.int64)
        return cls(adj, np.asarray(capacity, dtype=np.int64))

    @property
    def shape(self):
        return self.adjacency.shape


@dataclass(frozen=True)
class ConstrictedSet:
    contents: np.ndarray
    storages: np.ndarray
    storage_capacity: int

    def __post_init__(self):
        assert len(self.contents) > self.storage_capacity


@dataclass
class MatchingResult:
    """Outcome of one auction.

    ``assignment[n]`` is the real storage won by content ``n`` or -1 when it
    was left with a virtual storage. ``prices`` covers real storages only.
    """

    assignment: np.ndarray
    prices: np.ndarray
    iterations: int
    welfare: float
    price_units: np.ndarray
    virtual_price: float
    quantum: float
    trace: list = field(default_factory=list, repr=False)


def _load(assignment, n_storage):
    matched = assignment[assignment >= 0]
    return np.bincount(matched, minlength=n_storage).astype(np.int64)


@njit(cache=True)
def _search(adj, cap, assignment, load, roots, seen_c, seen_s, parent):
    """Breadth-first alternating search from the free contents ``roots``.

    The queue holds groups of contents: the roots first, then the mates of
    each reached storage. Within a group, storages are discovered in order of
    (first adjacent group member, storage index). Returns the first storage
    found with spare capacity, or -1; ``seen_*`` and ``parent`` are filled in.
    """
    n, m = adj.shape
    queue = np.empty(n, dtype=np.int64)
    bounds = np.empty(m + 2, dtype=np.int64)
    tail = 0
    for r in roots:
        queue[tail] = r
        seen_c[r] = True
        tail += 1
    bounds[0] = 0
    bounds[1] = tail
    n_groups = 1
    g = 0
    while g < n_groups:
        for q in range(bounds[g], bounds[g + 1]):
            c = queue[q]
            for s in range(m):
                if seen_s[s] or not adj[c, s]:
                    continue
                seen_s[s] = True
                parent[s] = c
                if load[s] < cap[s]:
                    return s
                start = tail
                for k in range(n):
                    if assignment[k] == s and not seen_c[k]:
                        seen_c[k] = True
                        queue[tail] = k
                        tail += 1
                if tail > start:
                    n_groups += 1
                    bounds[n_groups] = tail
        g += 1
    return -1


@njit(cache=True)
def _augment(assignment, load, parent, end):
    s = end
    while True:
        c = parent[s]
        prev = assignment[c]
        assignment[c] = s
        if prev < 0:
            break
        s = prev
    load[end] += 1


@njit(cache=True)
def _grow(adj, cap, assignment, load):
    """Augment from all free contents until the matching is perfect (-1) or
    stuck; when stuck, return the lowest free content."""
    n, m = adj.shape
    while True:
        roots = np.flatnonzero(assignment < 0)
        if len(roots) == 0:
            return -1
        seen_c = np.zeros(n, dtype=np.bool_)
        seen_s = np.zeros(m, dtype=np.bool_)
        parent = np.full(m, -1, dtype=np.int64)
        end = _search(adj, cap, assignment, load, roots, seen_c, seen_s, parent)
        if end < 0:
            return roots[0]
        _augment(assignment, load, parent, end)


def _constricted(graph, assignment, load, root) -> ConstrictedSet:
    n, m = graph.shape
    seen_c = np.zeros(n, dtype=bool)
    seen_s = np.zeros(m, dtype=bool)
    parent = np.full(m, -1, dtype=np.int64)
    end = _search(graph.adjacency, graph.capacity, assignment, load,
                  np.array([root], dtype=np.int64), seen_c, seen_s, parent)
    assert end < 0
    storages = np.flatnonzero(seen_s)
    return ConstrictedSet(np.flatnonzero(seen_c), storages, int(graph.capacity[storages].sum()))


def _step(graph, assignment, load):
    """Grow ``assignment`` to a maximum matching in place; its constricted set or None."""
    root = _grow(graph.adjacency, graph.capacity, assignment, load)
    return None if root < 0 else _constricted(graph, assignment, load, root)


def augment_or_constrict(graph: PreferredGraph, assignment):
    """Enlarge ``assignment`` by one augmenting path, or report a constricted set.

    The augmenting path comes from a breadth-first search started at all free
    contents at once. If there is none, the constricted set is the node set
    visited by the search from the lowest-index free content. A perfect
    matching is returned unchanged.
    """
    assignment = np.array(assignment, dtype=np.int64, copy=True)
    load = _load(assignment, graph.shape[1])
    free = np.flatnonzero(assignment < 0)
    if len(free) == 0:
        return assignment
    n, m = graph.shape
    seen_c = np.zeros(n, dtype=bool)
    seen_s = np.zeros(m, dtype=bool)
    parent = np.full(m, -1, dtype=np.int64)
    end = _search(graph.adjacency, graph.capacity, assignment, load, free, seen_c, seen_s, parent)
    if end >= 0:
        _augment(assignment, load, parent, end)
        return assignment
    return _constricted(graph, assignment, load, free[0])


def market_match(valuations, trace: bool = False) -> MatchingResult:
    """Run the market matching algorithm on an ``N x M`` instance (``N >= M``)."""
    vm = as_valuations(valuations)
    units = vm.units
    n, m = units.shape
    if n < m:
        raise ValueError(f"need at least as many contents as storages, got {n} < {m}")
    if n > m:
        units = np.hstack([units, np.zeros((n, 1), dtype=np.int64)])
        capacity = np.ones(m + 1, dtype=np.int64)
        capacity[m] = n - m
    else:
        capacity = np.ones(m, dtype=np.int64)
    prices = np.zeros(units.shape[1], dtype=np.int64)
    assignment = np.full(n, -1, dtype=np.int64)
    load = np.zeros(units.shape[1], dtype=np.int64)
    steps = []
    iterations = 0
    while True:
        iterations += 1
        graph = PreferredGraph.build(units, prices, capacity)
        # a price step on a constricted set keeps every matched edge preferred
        matched = np.flatnonzero(assignment >= 0)
        assert graph.adjacency[matched, assignment[matched]].all()
        cs = _step(graph, assignment, load)
        if cs is None:
            break
        profit = units[cs.contents] - prices[None, :]
        outside = np.ones(units.shape[1], dtype=bool)
        outside[cs.storages] = False
        step = int((profit.max(axis=1) - profit[:, outside].max(axis=1)).min())
        assert step > 0
        prices[cs.storages] += step
        floor = int(prices.min())
        if floor > 0:
            prices -= floor
        if trace:
            steps.append({"iteration": iterations, "contents": len(cs.contents),
                          "storage_capacity": cs.storage_capacity, "step": step * vm.quantum})
            log.debug("iteration %d: |C'|=%d |D'|=%d step=%g", iterations,
                      len(cs.contents), cs.storage_capacity, step * vm.quantum)

    real = np.where(assignment < m, assignment, -1)
    won = real >= 0
    welfare_units = int(units[np.flatnonzero(won), real[won]].sum())
    virtual = float(prices[m] * vm.quantum) if n > m else 0.0
    return MatchingResult(
        assignment=real,
        prices=prices[:m] * vm.quantum,
        iterations=iterations,
        welfare=welfare_units * vm.quantum,
        price_units=prices[:m].copy(),
        virtual_price=virtual,
        quantum=vm.quantum,
        trace=steps,
    )
