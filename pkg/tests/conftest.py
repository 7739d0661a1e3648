import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


def random_directions(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform on the sphere, returned as (phi, theta)."""
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.arctan2(v[:, 1], v[:, 0]), np.arcsin(np.clip(v[:, 2], -1, 1))


def compass_degrees() -> list[float]:
    return [45.0 * k if 45.0 * k <= 180.0 else 45.0 * k - 360.0 for k in range(8)]


DEG = math.pi / 180.0


# ---------------------------------------------------------------------------
# acceptance criteria: one pass/fail line each in the terminal summary

CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")
    config.stash[CRITERIA] = {}


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None and (report.when == "call" or report.failed):
        props = dict(item.user_properties)
        seen = item.config.stash[CRITERIA].get(item.nodeid)
        passed = report.passed and (seen is None or seen[2])
        item.config.stash[CRITERIA][item.nodeid] = (*marker.args, passed, props.get("elapsed"), props.get("limit"))
    return report


def pytest_terminal_summary(terminalreporter, config):
    rows = list(config.stash.get(CRITERIA, {}).values())
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, elapsed, limit in sorted(rows, key=lambda r: r[0]):
        timing = ""
        if elapsed is not None:
            timing = f" ({elapsed:.2f} s" + (f", limit {limit:g} s)" if limit else ")")
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {title}{timing}")
