# Coverage geometry of a hexagonal SBS grid.
#
# Each SBS covers a disk of radius R. Pulling the grid together (smaller
# compress factor c) makes the disks overlap more. The plane splits into
# "simplest regions", each covered by a fixed set of SBSs.

import math

import numpy as np

from cachemarket.geometry import (build_coverage_map, compress_for_overlap, generate_hex_layout,
                                  hex_overlap_exact, hex_patch_areas)

R = 50.0

# 24 SBSs filled ring by ring around a central one
layout = generate_hex_layout(24, R, compress=0.75)
cov = build_coverage_map(layout, resolution=0.25)
print(f"{len(cov.regions)} simplest regions, union area {cov.total_area:.0f} m^2")
print("regions by cover count:", np.bincount(cov.cover_counts)[1:])
print(f"overlap O = {cov.overlap:.4f}  (exact {hex_overlap_exact(24, R, 0.75):.4f})")

# closed-form lens (two disks) and triple patch areas against the sample
theta = math.acos(0.75)
patch = hex_patch_areas(R, theta)
print(f"lens  exact {patch.a2:8.2f}  sampled {cov.intersection_area((0, 1)):8.2f}")
print(f"triple exact {patch.a3:8.2f}  sampled {cov.intersection_area((0, 1, 2)):8.2f}")

# the grid whose overlap is 54%
c = compress_for_overlap(24, R, 0.54)
print(f"O = 54% needs c = {c:.5f}")

# O falls as the grid spreads out
for c in (0.6, 0.7, 0.8, 0.9, 1.0):
    print(f"c={c:.1f}  O={hex_overlap_exact(24, R, c):.3f}")
