"""Synthetic statement-like panel data.

Real quarterly fundamentals are proprietary, so this module fabricates a
two-period panel with the same shape: a few hundred accounting variables
spanning several orders of magnitude, a mask of immutable items, a share
of exact zeros, and ratings driven by a handful of modifiable variables.
Some entities upgrade between the two periods after moving those drivers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import RatingScale, TabularDataset, statement_feature_names, statement_immutable_names

PANEL_SCALE = RatingScale(("A", "A-", "BBB+", "BBB", "BBB-", "BB+"))


@dataclass(frozen=True)
class StatementPanel:
    dataset: TabularDataset
    immutable_names: tuple
    scale: RatingScale
    driver_names: tuple


def make_statement_panel(n_entities: int = 240, n_features: int = 300, n_modifiable: int = 86,
                         n_drivers: int = 6, zero_share: float = 0.08, upgrade_share: float = 0.4,
                         seed: int = 0) -> StatementPanel:
    rng = np.random.default_rng(seed)
    names = statement_feature_names(n_features, n_modifiable)
    drivers = np.arange(n_drivers)  # the first modifiable names drive the rating
    n_grades = len(PANEL_SCALE)

    magnitude = 10.0 ** rng.uniform(0, 5, size=n_features)
    # drivers are never tiny, so 2-decimal rounding cannot zero them
    magnitude[drivers] = 10.0 ** rng.uniform(2, 5, size=n_drivers)
    size = rng.lognormal(0.0, 0.5, size=(n_entities, 1))
    q1 = size * magnitude * rng.lognormal(0.0, 0.3, size=(n_entities, n_features))
    q1[rng.random(q1.shape) < zero_share] = 0.0
    q1[:, drivers] = size * magnitude[drivers] * rng.lognormal(0.0, 0.6, size=(n_entities, n_drivers))
    q1 = np.round(q1, 2)

    # rating score: relative level of the drivers (log scale) against the entity's size
    weights = rng.choice([-1.0, 1.0], size=n_drivers) * rng.uniform(0.5, 1.5, size=n_drivers)

    def score(rows):
        rel = np.log(rows[:, drivers] / (size * magnitude[drivers]))
        return rel @ weights

    s1 = score(q1)
    cuts = np.quantile(s1, np.linspace(0, 1, n_grades + 1)[1:-1])

    def grade(s):
        # high score = better grade = lower ordinal
        return n_grades - np.searchsorted(cuts, s)

    r1 = grade(s1)

    q2 = q1.copy()
    touched = rng.random(q2.shape) < 0.35
    q2[touched] = np.round(q2[touched] * rng.lognormal(0.0, 0.05, size=touched.sum()), 2)
    upgraders = np.flatnonzero((rng.random(n_entities) < upgrade_share) & (r1 > 1))
    for e in upgraders:
        move = rng.choice(drivers, size=max(1, n_drivers // 2), replace=False)
        q2[e, move] = np.round(q2[e, move] * np.exp(0.6 * np.sign(weights[move])), 2)
    r2 = grade(score(q2))

    rows = np.empty((2 * n_entities, n_features))
    rows[0::2], rows[1::2] = q1, q2
    ratings = np.empty(2 * n_entities, dtype=int)
    ratings[0::2], ratings[1::2] = r1, r2
    ids = tuple(f"E{e:04d}" for e in range(n_entities) for _ in range(2))
    periods = ("2020Q1", "2020Q2") * n_entities

    ds = TabularDataset(names, rows, ratings, ids, periods)
    return StatementPanel(ds, tuple(statement_immutable_names(names)), PANEL_SCALE,
                          tuple(names[j] for j in drivers))
