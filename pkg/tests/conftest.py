import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from twd.geometry import LandmarkSet, PrecisionConfig, WitnessGrid, generate_net


def lattice_points(k: int, precision: PrecisionConfig) -> np.ndarray:
    """2^k points per axis at the multiples of 2^-k"""
    m = 1 << k
    axes = np.meshgrid(*([np.arange(m, dtype=np.int64)] * precision.d), indexing='ij')
    return np.stack([a.ravel() for a in axes], axis=-1) * (precision.scale // m)


def jittered_lattice(k: int, precision: PrecisionConfig, amplitude: float, seed: int) -> np.ndarray:
    """Lattice with independent uniform jitter of at most `amplitude` per coordinate"""
    rng = np.random.default_rng(seed)
    base = lattice_points(k, precision)
    bound = int(amplitude * precision.scale)
    jitter = rng.integers(-bound, bound + 1, size=base.shape, dtype=np.int64)
    return (base + jitter) & (precision.scale - 1)


def sheared_lattice(precision: PrecisionConfig, amplitude: float, seed: int) -> np.ndarray:
    """16 points of the lattice spanned by (1/4, 0) and (1/8, 1/4), jittered; its triangles are acute"""
    rng = np.random.default_rng(seed)
    i, j = np.meshgrid(np.arange(4), np.arange(4), indexing='ij')
    coords = np.stack([(2 * i + j).ravel(), (2 * j).ravel()], axis=-1) * (precision.scale // 8)
    bound = int(amplitude * precision.scale)
    jitter = rng.integers(-bound, bound + 1, size=coords.shape, dtype=np.int64)
    return (coords + jitter) & (precision.scale - 1)


@pytest.fixture
def precision2():
    return PrecisionConfig(2)


@pytest.fixture
def precision3():
    return PrecisionConfig(3)


@pytest.fixture
def small_net(precision2):
    """A (0.2, 0.7)-net of the 2-torus"""
    return generate_net(0.2, 0.7, seed=3, precision=precision2)


@pytest.fixture
def coarse_grid(precision2):
    return WitnessGrid(7, precision2)


@pytest.fixture
def jittered_net(precision2):
    """8 x 8 lattice with small generic jitter, as a landmark set"""
    points = jittered_lattice(3, precision2, 0.01, seed=11)
    return LandmarkSet(points, lambda_=0.11, mu_bar=0.9, precision=precision2)


@pytest.fixture
def sparse_net(precision2):
    """4 x 4 lattice with generic jitter"""
    return LandmarkSet(jittered_lattice(2, precision2, 0.02, seed=5), 0.21, 0.8, precision2)
