from __future__ import annotations

import math
import sys
from pathlib import Path
from typing import Callable

import numpy as np
import pytest


ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from freeclt.models.schemas import AtomicMeasure, SemicircleMeasure  # noqa: E402

SQRT3 = math.sqrt(3.0)


@pytest.fixture
def bernoulli() -> AtomicMeasure:
    return AtomicMeasure(atoms=((-1.0, 0.5), (1.0, 0.5)))


@pytest.fixture
def skewed() -> AtomicMeasure:
    """Standardized image of atoms((0, 3/4), (1, 1/4)): m3 = 2/sqrt(3), m4 = 7/3."""
    return AtomicMeasure(atoms=((-1.0 / SQRT3, 0.75), (SQRT3, 0.25)))


@pytest.fixture
def semicircle() -> SemicircleMeasure:
    return SemicircleMeasure()


@pytest.fixture
def random_atoms() -> Callable[[np.random.Generator, int], AtomicMeasure]:
    """Factory for random standardized atomic measures with well-separated atoms."""

    def make(rng: np.random.Generator, size: int) -> AtomicMeasure:
        while True:
            positions = np.sort(rng.uniform(-3.0, 3.0, size))
            if np.min(np.diff(positions)) >= 0.2:
                break
        weights = rng.uniform(0.2, 1.0, size)
        weights /= weights.sum()
        mean = float(np.dot(weights, positions))
        std = math.sqrt(float(np.dot(weights, (positions - mean) ** 2)))
        centered = (positions - mean) / std
        total = math.fsum(weights.tolist())
        return AtomicMeasure(atoms=tuple((float(u), float(w) / total) for u, w in zip(centered, weights)))

    return make
