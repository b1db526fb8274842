# conftest.py
import sys
from pathlib import Path

import numpy as np
import pytest

# модули симулятора импортируются по имени, как в корневом main.py
SIM_DIR = Path(__file__).resolve().parent.parent / "pfch_sim"
if str(SIM_DIR) not in sys.path:
    sys.path.insert(0, str(SIM_DIR))

from grid import GridSpec  # noqa: E402
from operators import PhaseState, project_tangent_field  # noqa: E402
from physics import ModelParams  # noqa: E402


def pytest_addoption(parser) -> None:
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance-scale scenarios")


def pytest_collection_modifyitems(config, items) -> None:
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path) -> None:
    # настройки машины не должны протекать из окружения разработчика
    for name in ("PFCH_MAX_CELLS", "PFCH_LOG_LEVEL", "PFCH_DB"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def grid8() -> GridSpec:
    return GridSpec(8, 8)


@pytest.fixture
def grid16() -> GridSpec:
    return GridSpec(16, 16)


@pytest.fixture
def params() -> ModelParams:
    return ModelParams(alpha=(100.0, 0.0, 100.0))


@pytest.fixture
def e0_x():
    def make(grid: GridSpec, ex: float = 1.0, ey: float = 0.0) -> np.ndarray:
        return np.stack([np.full(grid.shape, ex), np.full(grid.shape, ey)])

    return make


def noisy_state(grid: GridSpec, rng: np.random.Generator, m=(0.3, 0.3, 0.4), amp: float = 0.05) -> PhaseState:
    m = np.asarray(m, dtype=float)
    c = np.empty((3, *grid.shape))
    for i in range(2):
        u = rng.uniform(-1.0, 1.0, grid.shape)
        c[i] = m[i] + amp * (u - u.mean())
    c[2] = 1.0 - c[0] - c[1]
    return PhaseState(c, m)


def tangent_direction(grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    x, y = grid.cell_centers()
    out = np.zeros((3, *grid.shape))
    for i in range(3):
        for kx in range(3):
            for ky in range(3):
                out[i] += rng.uniform(-1, 1) * np.cos(np.pi * kx * x) * np.cos(np.pi * ky * y)
    return project_tangent_field(grid, out)


@pytest.fixture
def state16(grid16, rng) -> PhaseState:
    return noisy_state(grid16, rng)
