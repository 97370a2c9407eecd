import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pqlab.measure import DataPair, MeasureSpace
from pqlab.rng import SplitMix64

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_RESULTS: dict = {}


def random_pair(space: MeasureSpace, p: float, seed: int) -> DataPair:
    r = SplitMix64(seed)
    shape = (space.point_count, space.value_dim)
    return DataPair.from_arrays(space, r.normal(space.dim).reshape(shape), r.normal(space.dim).reshape(shape), p)


@pytest.fixture
def rng():
    return SplitMix64(20240611)


@pytest.fixture
def acceptance():
    def record(number: int, name: str, passed: bool, detail: str = ""):
        ACCEPTANCE_RESULTS[number] = (name, bool(passed), detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        name, passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number}. {name}  {detail}")
