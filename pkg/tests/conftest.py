import functools
import time

import numpy as np
import pytest

from cachemarket.experiments import LayoutSpec, ScenarioConfig, run_scenario

ACCEPTANCE_LINES: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[criterion])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


RUN_SECONDS: dict[ScenarioConfig, float] = {}


@functools.lru_cache(maxsize=None)
def cached_run(config: ScenarioConfig):
    """Scenario results shared between tests; wall time kept per config."""
    start = time.perf_counter()
    result = run_scenario(config)
    RUN_SECONDS[config] = time.perf_counter() - start
    return result


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_config(**kw) -> ScenarioConfig:
    """Three overlapping SBSs and a couple of hundred contents: runs in about a second."""
    base = dict(layout=LayoutSpec(compress=0.7, overlap=None), sbs_count=3, capacity_gb=10.0, contents=200, providers=3, hours=4,
                resolution=0.5)
    base.update(kw)
    return ScenarioConfig(**base)
