import math
from pathlib import Path

import numpy as np
import pytest

from hsigraph.scene import SceneMesh, box_mesh

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"
FIXTURES = Path(__file__).resolve().parent / "fixtures"


def floor_quad(half=6.0):
    v = np.array([[-half, -half, 0.0], [half, -half, 0.0], [half, half, 0.0], [-half, half, 0.0]])
    return v, np.array([[0, 1, 2], [0, 2, 3]])


def open_room(half=6.0, **objects):
    """Open floor quad plus named boxes given as ``name=(center, size)``."""
    parts = {"floor": floor_quad(half)}
    for name, (c, s) in objects.items():
        parts[name] = box_mesh(c, s)
    return SceneMesh.from_objects(parts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def deg():
    return math.radians
