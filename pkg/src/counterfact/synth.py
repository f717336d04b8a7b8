"""Four-cluster synthetic rating data.

Two informative coordinates are each a 50/50 mixture of normals centred at
``+m`` and ``-m``; three further coordinates are pure noise.  The label is
the quadrant of the *component means*, counted counterclockwise from the
first quadrant: (+,+) -> 1, (-,+) -> 2, (-,-) -> 3, (+,-) -> 4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .ingest import TabularDataset

FEATURE_NAMES = ("x1", "x2", "x3", "x4", "x5")

# (sign of x1 mean, sign of x2 mean) -> rating
_QUADRANT_LABEL = {(1, 1): 1, (-1, 1): 2, (-1, -1): 3, (1, -1): 4}


@dataclass(frozen=True)
class SynthConfig:
    n_points: int = 4000
    variance: float = 0.3
    mean_magnitude: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_points < 4:
            raise ContractError("n_points must be >= 4")
        if not self.variance > 0:
            raise ContractError("variance must be > 0")
        if not self.mean_magnitude > 0:
            raise ContractError("mean_magnitude must be > 0")


def label_from_signs(s1, s2):
    s1 = np.asarray(s1, dtype=int)
    s2 = np.asarray(s2, dtype=int)
    # (+,+)=1 (-,+)=2 (-,-)=3 (+,-)=4
    return np.where(s2 > 0, np.where(s1 > 0, 1, 2), np.where(s1 < 0, 3, 4))


def generate(config: SynthConfig, return_signs: bool = False):
    """Return ``(features, labels)``; optionally also the drawn ``(n, 2)`` signs."""
    rng = np.random.default_rng(config.seed)
    n = config.n_points
    sd = math.sqrt(config.variance)
    signs = rng.choice(np.array([-1, 1]), size=(n, 2))
    X = np.empty((n, 5))
    X[:, :2] = signs * config.mean_magnitude + rng.normal(0.0, sd, size=(n, 2))
    X[:, 2:] = rng.normal(0.0, sd, size=(n, 3))
    y = label_from_signs(signs[:, 0], signs[:, 1])
    if return_signs:
        return X, y, signs
    return X, y


def generate_dataset(config: SynthConfig) -> TabularDataset:
    X, y = generate(config)
    return TabularDataset(FEATURE_NAMES, X, y)
