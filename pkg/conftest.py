import math

import numpy as np
import pytest

from basin import BasinMap, GridSpec
from consts import CLASS_ESCAPE_NEGATIVE, CLASS_ESCAPE_POSITIVE, CLASS_PERIODIC
from model import MarketParams, ModelParams

GRID_SIZE = 64


def make_params(delta: float = 0.0, a: float = 0.0) -> ModelParams:
    return ModelParams(alpha=1.0, beta=1.0, beta1=0.25, gamma=1.0, delta=delta, a=a, omega1=math.pi)


def make_map(classes: np.ndarray, periods: np.ndarray | None = None) -> BasinMap:
    ny, nx = classes.shape
    if periods is None:
        periods = np.where(classes == CLASS_PERIODIC, 1, 0)
    return BasinMap(grid=GridSpec(nx=nx, ny=ny), classes=classes.astype(np.int8), periods=periods.astype(np.int16))


@pytest.fixture
def unforced() -> ModelParams:
    return make_params()


@pytest.fixture
def forced() -> ModelParams:
    return make_params(delta=0.1, a=2.6)


@pytest.fixture
def strongly_forced() -> ModelParams:
    return make_params(delta=0.1, a=5.0)


@pytest.fixture
def market() -> MarketParams:
    return MarketParams(alpha=1.0, beta=1.0, beta1=0.25, gamma=1.0, delta=0.1, P_d=3.0, P_s=3.0, a=2.6,
                        omega1=math.pi)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)


@pytest.fixture
def half_plane_map() -> BasinMap:
    classes = np.full((GRID_SIZE, GRID_SIZE), CLASS_ESCAPE_POSITIVE)
    classes[:, GRID_SIZE // 2:] = CLASS_ESCAPE_NEGATIVE
    return make_map(classes)


@pytest.fixture
def checkerboard_map() -> BasinMap:
    j, i = np.indices((GRID_SIZE, GRID_SIZE))
    return make_map(np.where((i + j) % 2 == 0, CLASS_ESCAPE_POSITIVE, CLASS_ESCAPE_NEGATIVE))


@pytest.fixture
def single_class_map() -> BasinMap:
    return make_map(np.full((GRID_SIZE, GRID_SIZE), CLASS_PERIODIC))
