"""Equal-sized content blocks cut from each SP's popularity-ordered data ribbon.

Blocks are rebuilt every hour, so a block's identity across hours is its set
of byte ranges, not its index. All offsets are integer megabytes.
"""

from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass, field

import numpy as np

from .demand import MB_PER_GB, Catalog


def to_mb(gb: float) -> int:
    return int(round(gb * MB_PER_GB))


@dataclass(frozen=True)
class Piece:
    """Bytes ``[start, end)`` of content ``content`` (MB offsets)."""

    content: int
    start: int
    end: int
    eta: float

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ContentBlock:
    sp: int
    index: int
    size_mb: int
    pieces: tuple[Piece, ...]
    popularity: float

    @property
    def size(self) -> float:
        return self.size_mb / MB_PER_GB


class RangeSet:
    """Per-content sets of disjoint half-open byte ranges."""

    def __init__(self):
        self._ranges: dict[int, list[tuple[int, int]]] = {}

    def __len__(self):
        return sum(e - s for spans in self._ranges.values() for s, e in spans)

    def __eq__(self, other):
        return isinstance(other, RangeSet) and self._ranges == other._ranges

    def copy(self) -> "RangeSet":
        out = RangeSet()
        out._ranges = {k: list(v) for k, v in self._ranges.items()}
        return out

    def spans(self, content: int) -> list[tuple[int, int]]:
        return list(self._ranges.get(content, ()))

    def items(self):
        return ((k, list(v)) for k, v in sorted(self._ranges.items()))

    def add(self, content: int, start: int, end: int) -> None:
        if end <= start:
            return
        spans = self._ranges.setdefault(content, [])
        merged = []
        for s, e in spans:
            if e < start or s > end:
                merged.append((s, e))
            else:
                start, end = min(s, start), max(e, end)
        bisect.insort(merged, (start, end))
        self._ranges[content] = merged

    def add_block(self, block: ContentBlock) -> None:
        for p in block.pieces:
            self.add(p.content, p.start, p.end)

    def overlap(self, content: int, start: int, end: int) -> int:
        total = 0
        for s, e in self._ranges.get(content, ()):
            if s >= end:
                break
            total += max(0, min(e, end) - max(s, start))
        return total

    def contains_block(self, block: ContentBlock) -> bool:
        return all(self.overlap(p.content, p.start, p.end) == p.length for p in block.pieces)


@dataclass(frozen=True)
class RibbonSnapshot:
    hour: int
    block_size_mb: int
    blocks: tuple[ContentBlock, ...]
    order: dict[int, np.ndarray] = field(repr=False)
    dropped_mb: dict[int, int] = field(repr=False)
    dropped_popularity: float = 0.0

    @property
    def popularity(self) -> np.ndarray:
        return np.array([b.popularity for b in self.blocks], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sp", "r", "composition", "popularity"])
            for b in self.blocks:
                comp = " ".join(f"{p.content}:{p.start}-{p.end}" for p in b.pieces)
                writer.writerow([b.sp, b.index, comp, repr(b.popularity)])


def ribbon_order(popularity: np.ndarray, size_mb: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Content ids by descending popularity-to-size ratio, ties by ascending id."""
    ratio = popularity / size_mb
    return ids[np.lexsort((ids, -ratio))]


def _cut(order, sp, popularity, size_mb, block_size_mb):
    blocks = []
    pieces = []
    filled = 0
    for k in order:
        k = int(k)
        offset, size = 0, int(size_mb[k])
        while offset < size:
            take = min(size - offset, block_size_mb - filled)
            pieces.append(Piece(k, offset, offset + take, take / size))
            offset += take
            filled += take
            if filled == block_size_mb:
                phi = sum(p.eta * popularity[p.content] for p in pieces)
                blocks.append(ContentBlock(sp, len(blocks), block_size_mb, tuple(pieces), float(phi)))
                pieces, filled = [], 0
    dropped_phi = sum(p.eta * popularity[p.content] for p in pieces)
    return blocks, filled, float(dropped_phi)


def ribbonize(catalog: Catalog, sp: int, block_size: float, t: float) -> list[ContentBlock]:
    """Blocks of SP ``sp`` at hour ``t``; the trailing remainder shorter than a block is dropped."""
    return list(_ribbonize_sp(catalog, sp, to_mb(block_size), catalog.popularity(t))[0])


def _ribbonize_sp(catalog, sp, block_size_mb, popularity):
    if block_size_mb <= 0:
        raise ValueError("block size must be positive")
    ids = catalog.provider_contents(sp)
    if len(ids) == 0:
        return [], ids, 0, 0.0
    order = ribbon_order(popularity[ids], catalog.size_mb[ids], ids)
    blocks, dropped, dropped_phi = _cut(order, sp, popularity, catalog.size_mb, block_size_mb)
    return blocks, order, dropped, dropped_phi


def ribbonize_all(catalog: Catalog, block_size: float, t: float) -> RibbonSnapshot:
    """Blocks of every SP, ordered by (SP, block index)."""
    s_mb = to_mb(block_size)
    popularity = catalog.popularity(t)
    blocks, orders, dropped = [], {}, {}
    dropped_phi = 0.0
    for sp in range(catalog.provider_count):
        b, order, d_mb, d_phi = _ribbonize_sp(catalog, sp, s_mb, popularity)
        blocks.extend(b)
        orders[sp] = order
        dropped[sp] = d_mb
        dropped_phi += d_phi
    return RibbonSnapshot(int(t), s_mb, tuple(blocks), orders, dropped, dropped_phi)


def block_overlap_fraction(block: ContentBlock, cached: RangeSet) -> float:
    """Fraction of ``block``'s bytes already present in ``cached``."""
    hit = sum(cached.overlap(p.content, p.start, p.end) for p in block.pieces)
    return hit / block.size_mb


def overlap_matrix(blocks, cached_by_sbs) -> np.ndarray:
    """``eps[b, i]``: fraction of block ``b`` held by SBS ``i``."""
    eps = np.zeros((len(blocks), len(cached_by_sbs)))
    for i, cached in enumerate(cached_by_sbs):
        if not len(cached):
            continue
        for n, block in enumerate(blocks):
            eps[n, i] = block_overlap_fraction(block, cached)
    return eps
