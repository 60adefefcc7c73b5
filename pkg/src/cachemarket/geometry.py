"""SBS layouts and the coverage arrangement of their disks.

Coverage regions are extracted by sampling a regular grid: every cell is
assigned the set of disks containing its center, and cells sharing a set are
merged into one simplest region. With at most three disks overlapping at any
point this is accurate to O(resolution) and needs no arc predicates. The
closed-form hexagonal patch areas (`hex_patch_areas`) serve as the exact
reference for the sampled areas.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

MIN_COMPRESS = 1.0 / math.sqrt(3.0)
MAX_THETA = math.acos(MIN_COMPRESS)
MAX_OVERLAP_ORDER = 3
RANDOM_LAYOUT_ATTEMPTS = 10_000


class GeometryError(ValueError):
    """A layout or patch-area request outside the supported domain."""


class CoverageConstraintError(GeometryError):
    """Some point of the plane is covered by four or more disks."""


class LayoutGenerationError(RuntimeError):
    """Rejection sampling ran out of attempts."""


@dataclass(frozen=True)
class SbsLayout:
    """Positions (m), common coverage radius (m) and storage capacities (GB)."""

    positions: np.ndarray
    radius: float
    capacities: np.ndarray

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        capacities = np.broadcast_to(
            np.asarray(self.capacities, dtype=float), (len(positions),)
        ).copy()
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "capacities", capacities)
        if len(positions) < 1:
            raise GeometryError("a layout needs at least one SBS")
        if not self.radius > 0:
            raise GeometryError(f"radius must be positive, got {self.radius}")
        if np.any(capacities <= 0):
            raise GeometryError("capacities must be positive")
        if not max_overlap_order_ok(positions, self.radius):
            raise CoverageConstraintError(
                "layout has a point covered by four or more SBSs"
            )

    @property
    def count(self) -> int:
        return len(self.positions)

    def with_capacity(self, capacity) -> "SbsLayout":
        return SbsLayout(self.positions, self.radius, capacity)

    def to_dict(self) -> dict:
        return {
            "radius": float(self.radius),
            "positions": [[float(x), float(y)] for x, y in self.positions],
            "capacities": [float(h) for h in self.capacities],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SbsLayout":
        return cls(
            np.array(data["positions"], dtype=float),
            float(data["radius"]),
            np.array(data["capacities"], dtype=float),
        )

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path) -> "SbsLayout":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))


@dataclass(frozen=True)
class SimplestRegion:
    id: int
    sbs: tuple[int, ...]
    area: float


@dataclass(frozen=True)
class CoverageMap:
    """Partition of the covered plane into simplest regions.

    ``incidence[j, i]`` is true when SBS ``i`` covers region ``j``; ``areas``
    holds the region areas in the same order as ``regions``.
    """

    regions: tuple[SimplestRegion, ...]
    sbs_count: int
    resolution: float
    incidence: np.ndarray = field(repr=False)
    areas: np.ndarray = field(repr=False)

    @classmethod
    def from_regions(cls, regions, sbs_count: int, resolution: float) -> "CoverageMap":
        regions = tuple(regions)
        incidence = np.zeros((len(regions), sbs_count), dtype=bool)
        for r in regions:
            incidence[r.id, list(r.sbs)] = True
        areas = np.array([r.area for r in regions], dtype=float)
        return cls(regions, sbs_count, resolution, incidence, areas)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @property
    def sbs_areas(self) -> np.ndarray:
        return self.areas @ self.incidence

    @property
    def overlap(self) -> float:
        total = self.total_area
        if total == 0:
            return 0.0
        return max(0.0, float((self.sbs_areas.sum() - total) / total))

    @property
    def cover_counts(self) -> np.ndarray:
        return self.incidence.sum(axis=1)

    def intersection_area(self, sbs) -> float:
        """Area covered by every SBS in ``sbs`` (and possibly others)."""
        cols = list(sbs)
        return float(self.areas[self.incidence[:, cols].all(axis=1)].sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["region", "sbs", "area"])
            for r in self.regions:
                writer.writerow([r.id, " ".join(map(str, r.sbs)), f"{r.area:.6f}"])

    @classmethod
    def from_csv(cls, path, sbs_count: int, resolution: float = float("nan")) -> "CoverageMap":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        regions = [
            SimplestRegion(int(row["region"]), tuple(int(s) for s in row["sbs"].split()), float(row["area"]))
            for row in rows
        ]
        return cls.from_regions(regions, sbs_count, resolution)


@dataclass(frozen=True)
class HexPatchAreas:
    a1: float
    a2: float
    a3: float
    theta: float

    @property
    def compress(self) -> float:
        return math.cos(self.theta)

    @property
    def per_sbs_union(self) -> float:
        """Union area per SBS in an unbounded hexagonal grid."""
        return self.a1 - 3 * self.a2 + 2 * self.a3


def _enclosing_radius(points: np.ndarray) -> float:
    """Radius of the minimum enclosing circle of a handful of points."""
    best = math.inf
    n = len(points)
    for i, j in itertools.combinations(range(n), 2):
        center = (points[i] + points[j]) / 2
        r = np.linalg.norm(points[i] - center)
        if r < best and np.all(np.linalg.norm(points - center, axis=1) <= r + 1e-9):
            best = r
    for i, j, k in itertools.combinations(range(n), 3):
        a, b, c = points[i], points[j], points[k]
        d = 2 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
        if abs(d) < 1e-12:
            continue
        ux = (
            (a @ a) * (b[1] - c[1]) + (b @ b) * (c[1] - a[1]) + (c @ c) * (a[1] - b[1])
        ) / d
        uy = (
            (a @ a) * (c[0] - b[0]) + (b @ b) * (a[0] - c[0]) + (c @ c) * (b[0] - a[0])
        ) / d
        center = np.array([ux, uy])
        r = np.linalg.norm(a - center)
        if r < best and np.all(np.linalg.norm(points - center, axis=1) <= r + 1e-9):
            best = r
    return best


def max_overlap_order_ok(positions: np.ndarray, radius: float, order: int = MAX_OVERLAP_ORDER) -> bool:
    """True if no open region is covered by more than ``order`` disks.

    Equal-radius disks share an interior point exactly when the minimum
    enclosing circle of their centers is smaller than the radius, so it is
    enough to test every clique of ``order + 1`` pairwise-overlapping disks.
    """
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    if n <= order:
        return True
    dist = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
    near = dist < 2 * radius
    tol = 1e-9 * radius
    for i in range(n):
        nbrs = [j for j in range(i + 1, n) if near[i, j]]
        for combo in itertools.combinations(nbrs, order):
            if not all(near[a, b] for a, b in itertools.combinations(combo, 2)):
                continue
            pts = positions[[i, *combo]]
            if _enclosing_radius(pts) < radius - tol:
                return False
    return True


def _hex_ring_offsets(count: int) -> list[tuple[int, int]]:
    """Axial lattice coordinates, center first, then ring by ring counter-clockwise."""
    coords = [(0, 0)]
    directions = [(-1, 1), (-1, 0), (0, -1), (1, -1), (1, 0), (0, 1)]
    ring = 1
    while len(coords) < count:
        q, r = ring, 0
        for dq, dr in directions:
            for _ in range(ring):
                coords.append((q, r))
                q, r = q + dq, r + dr
        ring += 1
    return coords[:count]


def hex_positions(count: int, spacing: float) -> np.ndarray:
    axial = np.array(_hex_ring_offsets(count), dtype=float)
    x = spacing * (axial[:, 0] + axial[:, 1] / 2)
    y = spacing * (math.sqrt(3) / 2) * axial[:, 1]
    return np.column_stack([x, y])


def hex_ring_count(rings: int) -> int:
    return 1 + 3 * rings * (rings + 1)


def generate_hex_layout(count: int, radius: float, compress: float, capacity=1.0) -> SbsLayout:
    """Triangular-lattice layout with nearest-neighbor spacing ``2 * radius * compress``."""
    if count < 1:
        raise GeometryError("count must be >= 1")
    if not (MIN_COMPRESS - 1e-12 <= compress <= 1.0 + 1e-12):
        raise GeometryError(
            f"compress factor {compress} outside [1/sqrt(3), 1]; smaller values create 4-overlaps"
        )
    return SbsLayout(hex_positions(count, 2 * radius * compress), radius, capacity)


def generate_random_layout(count, radius, bounds, seed, capacity=1.0,
                           max_attempts=RANDOM_LAYOUT_ATTEMPTS) -> SbsLayout:
    """Uniform i.i.d. centers in ``bounds`` = (width, height) or (x0, y0, x1, y1).

    Whole layouts with a 4-fold overlap are rejected and redrawn.
    """
    if len(bounds) == 2:
        x0, y0, x1, y1 = 0.0, 0.0, float(bounds[0]), float(bounds[1])
    else:
        x0, y0, x1, y1 = map(float, bounds)
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        pts = np.column_stack([
            rng.uniform(x0, x1, size=count),
            rng.uniform(y0, y1, size=count),
        ])
        if max_overlap_order_ok(pts, radius):
            return SbsLayout(pts, radius, capacity)
    raise LayoutGenerationError(
        f"no valid layout of {count} SBSs in {bounds} after {max_attempts} attempts"
    )


def build_coverage_map(layout: SbsLayout, resolution: float = 0.25) -> CoverageMap:
    if not resolution > 0:
        raise GeometryError("resolution must be positive")
    pos, radius, n = layout.positions, layout.radius, layout.count
    lo = pos.min(axis=0) - radius
    hi = pos.max(axis=0) + radius
    nx = int(math.ceil((hi[0] - lo[0]) / resolution))
    ny = int(math.ceil((hi[1] - lo[1]) / resolution))
    xs = lo[0] + (np.arange(nx) + 0.5) * resolution
    ys = lo[1] + (np.arange(ny) + 0.5) * resolution

    counts = np.zeros((ny, nx), dtype=np.uint8)
    slots = np.full((MAX_OVERLAP_ORDER, ny, nx), -1, dtype=np.int32)
    r2 = radius * radius
    for i, (cx, cy) in enumerate(pos):
        ix0 = max(0, int((cx - radius - lo[0]) / resolution) - 1)
        ix1 = min(nx, int((cx + radius - lo[0]) / resolution) + 2)
        iy0 = max(0, int((cy - radius - lo[1]) / resolution) - 1)
        iy1 = min(ny, int((cy + radius - lo[1]) / resolution) + 2)
        dx2 = (xs[ix0:ix1] - cx) ** 2
        dy2 = (ys[iy0:iy1] - cy) ** 2
        inside = dy2[:, None] + dx2[None, :] < r2
        cnt = counts[iy0:iy1, ix0:ix1]
        if np.any(cnt[inside] >= MAX_OVERLAP_ORDER):
            raise CoverageConstraintError(f"SBS {i} creates a 4-fold covered cell")
        for k in range(MAX_OVERLAP_ORDER):
            sel = inside & (cnt == k)
            slots[k, iy0:iy1, ix0:ix1][sel] = i
        cnt[inside] += 1

    covered = counts > 0
    base = n + 1
    key = np.zeros(int(covered.sum()), dtype=np.int64)
    for k in range(MAX_OVERLAP_ORDER):
        key = key * base + (slots[k][covered].astype(np.int64) + 1)
    uniq, cell_counts = np.unique(key, return_counts=True)

    cell_area = resolution * resolution
    regions = []
    for j, (code, c) in enumerate(zip(uniq.tolist(), cell_counts.tolist())):
        members = []
        for _ in range(MAX_OVERLAP_ORDER):
            code, digit = divmod(code, base)
            if digit:
                members.append(digit - 1)
        regions.append(SimplestRegion(j, tuple(sorted(members)), c * cell_area))
    return CoverageMap.from_regions(regions, n, resolution)


def overlap_percentage(coverage: CoverageMap) -> float:
    return coverage.overlap


def hex_patch_areas(radius: float, theta: float) -> HexPatchAreas:
    """Closed-form single, pairwise and triple patch areas of a hexagonal grid.

    ``theta = arccos(c)``; adjacent centers are ``2 R cos(theta)`` apart.
    """
    if not (0.0 < theta < MAX_THETA):
        raise GeometryError(f"theta={theta} outside (0, arccos(1/sqrt(3)))")
    r2 = radius * radius
    a1 = math.pi * r2
    a2 = 2 * r2 * (theta - math.cos(theta) * math.sin(theta))
    if theta <= math.pi / 6:
        a3 = 0.0
    else:
        a3 = r2 * (
            3 * (theta - math.pi / 6)
            + math.sqrt(3) * math.cos(theta) ** 2
            - 3 * math.sin(theta) * math.cos(theta)
        )
    return HexPatchAreas(a1, a2, a3, theta)


def lattice_adjacency(layout: SbsLayout, spacing: float):
    """Adjacent pairs and mutually adjacent triples at lattice distance ``spacing``."""
    pos = layout.positions
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    adj = np.isclose(dist, spacing, rtol=1e-9, atol=1e-9)
    pairs = [(i, j) for i, j in zip(*np.nonzero(np.triu(adj, 1)))]
    triples = [
        (i, j, k) for i, j in pairs
        for k in range(j + 1, len(pos)) if adj[i, k] and adj[j, k]
    ]
    return pairs, triples


def hex_overlap_exact(count: int, radius: float, compress: float) -> float:
    """Overlap percentage of a finite hex layout by inclusion-exclusion.

    Exact for ``c`` in (1/sqrt(3), 1): only lattice neighbors overlap and no
    point lies in more than three disks.
    """
    if compress >= 1.0:
        return 0.0
    layout = generate_hex_layout(count, radius, compress)
    pairs, triples = lattice_adjacency(layout, 2 * radius * compress)
    patches = hex_patch_areas(radius, math.acos(compress))
    union = count * patches.a1 - len(pairs) * patches.a2 + len(triples) * patches.a3
    return (count * patches.a1 - union) / union


def compress_for_overlap(count: int, radius: float, target: float, tol: float = 1e-10) -> float:
    """Bisect the compress factor whose hex layout has overlap ``target``."""
    lo, hi = MIN_COMPRESS + 1e-12, 1.0
    o_max = hex_overlap_exact(count, radius, lo)
    if not 0.0 <= target <= o_max:
        raise GeometryError(f"overlap {target} not reachable with {count} SBSs (max {o_max:.3f})")
    # overlap decreases in c
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if hex_overlap_exact(count, radius, mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
