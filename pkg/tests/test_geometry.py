import math

import numpy as np
import pytest
from shapely.geometry import Point
from shapely.ops import unary_union

from cachemarket.geometry import (
    MIN_COMPRESS, CoverageConstraintError, CoverageMap, GeometryError, LayoutGenerationError,
    SbsLayout, build_coverage_map, compress_for_overlap, generate_hex_layout,
    generate_random_layout, hex_overlap_exact, hex_patch_areas, hex_ring_count, lattice_adjacency,
    max_overlap_order_ok,
)

R = 50.0


def disk(x, y, r=R):
    return Point(x, y).buffer(r, quad_segs=512)


def lens_area(r, d):
    """Two equal circles at distance d, textbook formula."""
    if d >= 2 * r:
        return 0.0
    return 2 * r * r * math.acos(d / (2 * r)) - 0.5 * d * math.sqrt(4 * r * r - d * d)


@pytest.mark.parametrize("c", [0.6, 0.7, 0.8, 0.9, 0.99])
def test_lens_matches_textbook_formula(c):
    got = hex_patch_areas(R, math.acos(c)).a2
    assert got == pytest.approx(lens_area(R, 2 * R * c), rel=1e-12)


@pytest.mark.parametrize("c", [0.6, 0.65, 0.7, 0.8, 0.86, 0.9])
def test_triple_patch_matches_polygon_clipping(c):
    d = 2 * R * c
    a, b, e = disk(0, 0), disk(d, 0), disk(d / 2, d * math.sqrt(3) / 2)
    oracle = a.intersection(b).intersection(e).area
    got = hex_patch_areas(R, math.acos(c)).a3
    assert got == pytest.approx(oracle, rel=2e-4, abs=1e-3)


def test_triple_patch_vanishes_beyond_thirty_degrees():
    assert hex_patch_areas(R, math.pi / 6).a3 == 0.0
    assert hex_patch_areas(R, math.pi / 6 - 0.01).a3 == 0.0
    assert hex_patch_areas(R, math.pi / 6 + 0.01).a3 > 0.0


def test_patch_area_domain_is_open():
    with pytest.raises(GeometryError):
        hex_patch_areas(R, 0.0)
    with pytest.raises(GeometryError):
        hex_patch_areas(R, math.acos(MIN_COMPRESS))


def test_covered_fraction_of_hex_cell_is_non_decreasing_in_theta():
    # union per SBS over the area of its hexagonal cell
    thetas = np.linspace(0.05, math.acos(MIN_COMPRESS) - 1e-3, 60)
    frac = []
    for th in thetas:
        p = hex_patch_areas(R, th)
        spacing = 2 * R * math.cos(th)
        frac.append(p.per_sbs_union / (math.sqrt(3) / 2 * spacing**2))
    frac = np.array(frac)
    assert np.all(np.diff(frac) >= -1e-12)
    assert frac[-1] == pytest.approx(1.0, abs=1e-9)


def test_two_disks_give_three_regions():
    layout = SbsLayout([[0, 0], [60, 0]], R, 1.0)
    cov = build_coverage_map(layout, 0.25)
    assert sorted(r.sbs for r in cov.regions) == [(0,), (0, 1), (1,)]
    assert cov.intersection_area((0, 1)) == pytest.approx(lens_area(R, 60), rel=1e-3)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_partition_property_against_polygon_union(seed):
    layout = generate_random_layout(6, R, (250, 200), seed)
    cov = build_coverage_map(layout, 0.25)
    union = unary_union([disk(x, y) for x, y in layout.positions]).area
    assert cov.total_area == pytest.approx(union, rel=2e-3)
    assert np.allclose(cov.sbs_areas, math.pi * R * R, rtol=2e-3)
    # every region's cover set is exactly what the incidence matrix says
    for r in cov.regions:
        assert tuple(np.flatnonzero(cov.incidence[r.id])) == r.sbs


def test_interior_hex_patches_match_closed_form():
    for c in (0.6, 0.7, 0.8, 0.9):
        layout = generate_hex_layout(7, R, c)
        cov = build_coverage_map(layout, 0.25)
        exact = hex_patch_areas(R, math.acos(c))
        pairs, triples = lattice_adjacency(layout, 2 * R * c)
        for p in pairs:
            assert cov.intersection_area(p) == pytest.approx(exact.a2, rel=0.01)
        for t in triples:
            assert cov.intersection_area(t) == pytest.approx(exact.a3, rel=0.01, abs=1.0)


def test_overlap_zero_for_touching_grid():
    cov = build_coverage_map(generate_hex_layout(7, R, 1.0), 0.25)
    assert cov.overlap == pytest.approx(0.0, abs=1e-12)


def test_overlap_decreases_in_compress():
    values = [hex_overlap_exact(24, R, c) for c in np.linspace(0.6, 0.99, 12)]
    assert all(a > b for a, b in zip(values, values[1:]))
    grid = [build_coverage_map(generate_hex_layout(24, R, c), 0.5).overlap for c in (0.6, 0.75, 0.9)]
    assert grid[0] > grid[1] > grid[2]


def test_exact_overlap_agrees_with_sampling():
    for c in (0.6, 0.75, 0.9):
        cov = build_coverage_map(generate_hex_layout(24, R, c), 0.25)
        assert cov.overlap == pytest.approx(hex_overlap_exact(24, R, c), abs=1e-3)


def test_compress_for_overlap_hits_target():
    c = compress_for_overlap(24, R, 0.54)
    assert MIN_COMPRESS < c < 1
    assert hex_overlap_exact(24, R, c) == pytest.approx(0.54, abs=1e-8)
    with pytest.raises(GeometryError):
        compress_for_overlap(24, R, 5.0)


def test_four_fold_overlap_rejected():
    with pytest.raises(CoverageConstraintError):
        SbsLayout([[0, 0], [10, 0], [0, 10], [10, 10]], R, 1.0)
    with pytest.raises(GeometryError):
        generate_hex_layout(7, R, 0.5)
    # three coincident disks are fine, a fourth is not
    assert max_overlap_order_ok(np.zeros((3, 2)), R)
    assert not max_overlap_order_ok(np.zeros((4, 2)), R)


def test_four_disks_sharing_only_a_point_are_allowed():
    # square of side sqrt(2) R: all four circles pass through the center
    s = math.sqrt(2) * R / 2
    pts = np.array([[-s, -s], [s, -s], [-s, s], [s, s]])
    assert max_overlap_order_ok(pts, R)
    assert not max_overlap_order_ok(pts * 0.99, R)


def test_hex_fill_order_is_deterministic():
    a = generate_hex_layout(10, R, 0.8).positions
    b = generate_hex_layout(12, R, 0.8).positions
    assert np.array_equal(a, b[:10])
    assert np.allclose(a[0], 0)
    ring1 = np.linalg.norm(a[1:7], axis=1)
    assert np.allclose(ring1, 2 * R * 0.8)
    assert hex_ring_count(10) == 331


def test_random_layout_seeded_and_bounded():
    a = generate_random_layout(10, R, (400, 300), seed=4)
    b = generate_random_layout(10, R, (400, 300), seed=4)
    assert np.array_equal(a.positions, b.positions)
    assert np.all((a.positions >= 0) & (a.positions <= [400, 300]))
    with pytest.raises(LayoutGenerationError):
        generate_random_layout(30, R, (20, 20), seed=0, max_attempts=5)


def test_layout_and_coverage_round_trip(tmp_path):
    layout = generate_hex_layout(5, R, 0.7, capacity=[10, 20, 30, 40, 50])
    layout.save(tmp_path / "l.yaml")
    back = SbsLayout.load(tmp_path / "l.yaml")
    assert np.allclose(back.positions, layout.positions)
    assert np.array_equal(back.capacities, layout.capacities)
    cov = build_coverage_map(layout, 0.5)
    cov.to_csv(tmp_path / "c.csv")
    again = CoverageMap.from_csv(tmp_path / "c.csv", layout.count)
    assert [r.sbs for r in again.regions] == [r.sbs for r in cov.regions]
    assert np.allclose(again.areas, cov.areas, atol=1e-6)


def test_grid_resolution_must_be_positive():
    with pytest.raises(GeometryError):
        build_coverage_map(generate_hex_layout(2, R, 0.8), 0.0)
