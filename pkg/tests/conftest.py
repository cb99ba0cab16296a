import numpy as np
import pytest

from bidisk_hull.config import RunConfig
from bidisk_hull.geometry import PointCloud
from bidisk_hull.pipeline import build

WORKED = (("(z+w)/2", 0.5 + 0j),)


def random_cloud(rng: np.random.Generator, n: int) -> PointCloud:
    """Uniform points of the closed bidisk."""
    r = np.sqrt(rng.uniform(0, 1, (2, n)))
    t = rng.uniform(0, 2 * np.pi, (2, n))
    zw = r * np.exp(1j * t)
    return PointCloud(zw[0], zw[1])


def line_cloud(n_r: int = 11, n_a: int = 24) -> PointCloud:
    """Samples of the disc {(t, -t): |t| <= 1}, including the rim."""
    r = np.linspace(0, 1, n_r)
    a = np.exp(2j * np.pi * np.arange(n_a) / n_a)
    t = np.concatenate([[0j], (r[1:, None] * a[None, :]).ravel()])
    return PointCloud(t, -t)


@pytest.fixture(scope="session")
def default_build():
    return build(RunConfig())


@pytest.fixture(scope="session")
def worked_build():
    return build(RunConfig(stages=1, injected_pairs=WORKED))


@pytest.fixture(scope="session")
def minimal_build():
    return build(RunConfig(n_safety=1.0))


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
