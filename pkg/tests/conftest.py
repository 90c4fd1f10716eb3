from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from hdist.mesh_io import PointCloud

DATA = Path(__file__).parent / "data"
CORPUS = sorted(DATA.glob("*.ply")) + sorted(DATA.glob("*.obj"))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def nn_dist(q: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Oracle nearest-neighbour distance from every row of ``q`` into ``t``."""
    out = np.empty(len(q))
    for lo in range(0, len(q), 512):
        d2 = ((q[lo:lo + 512, None, :] - t[None, :, :]) ** 2).sum(-1)
        out[lo:lo + 512] = np.sqrt(d2.min(1))
    return out


def random_pair(rng, na=None, nb=None, spread=None):
    na = na or int(rng.integers(1, 600))
    nb = nb or int(rng.integers(2, 600))
    spread = spread if spread is not None else rng.uniform(0.1, 5.0, size=3)
    a = rng.normal(size=(na, 3)) * spread
    b = rng.normal(size=(nb, 3)) * spread + rng.normal(size=3) * rng.uniform(0, 3)
    return PointCloud(a, "A"), PointCloud(b, "B")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria record one line each; printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
