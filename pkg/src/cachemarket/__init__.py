"""Small-cell caching shared by several content providers, allocated by auctions."""

from .auction import MatchingResult, ValuationMatrix, market_match, quantize
from .blocks import ContentBlock, RangeSet, ribbonize, ribbonize_all
from .delay import AllocationState, DelayParams, average_delay, no_cache_delay
from .demand import Catalog, ConfigurationError, DensityProfile, generate_catalog, sample_region_users
from .experiments import ScenarioConfig, SweepSpec, run_scenario, sweep
from .geometry import (CoverageMap, SbsLayout, build_coverage_map, compress_for_overlap,
                       generate_hex_layout, generate_random_layout, hex_patch_areas)
from .mechanism import (MechanismConfig, MechanismState, cache_greedy, cache_highest_popularity,
                        marginal_valuation, no_cache, run_hour, run_round)

__version__ = "0.1.0"
