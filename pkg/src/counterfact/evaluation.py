"""Effort norms, paired t-tests, match rates and batch aggregations."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataIntegrityError, DegenerateSampleError, InvalidInputError, UndefinedRateError
from .stats import t_cdf, t_sf


def norms(v, eps: float = 1e-8):
    """``(l0, l1, l2)`` where l0 counts entries with ``|v_i| > eps``."""
    v = np.asarray(v, dtype=np.float64)
    return int(np.count_nonzero(np.abs(v) > eps)), float(np.sum(np.abs(v))), float(np.sqrt(np.sum(v * v)))


@dataclass(frozen=True)
class TTestResult:
    statistic: float
    p_value: float
    mean_diff: float
    std_err: float
    n: int
    alternative: str

    @property
    def df(self) -> int:
        return self.n - 1


def paired_t_one_sided(a, b, alternative: str = "greater") -> TTestResult:
    """Matched-pairs one-sided t-test on ``d = a - b``.

    ``alternative="greater"`` tests mean(d) > 0, ``"less"`` tests mean(d) < 0.
    """
    if alternative not in ("greater", "less"):
        raise ValueError("alternative must be 'greater' or 'less'")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInputError("paired samples must be 1-D and of equal length")
    n = a.size
    if n < 2:
        raise InvalidInputError("paired t-test needs at least 2 pairs")
    d = a - b
    if np.all(d == d[0]):
        raise DegenerateSampleError("paired differences have zero variance")
    mean = float(np.sum(d) / n)
    se = float(np.std(d, ddof=1)) / math.sqrt(n)
    if se == 0:  # spread lost to underflow
        raise DegenerateSampleError("paired differences have zero variance")
    t = mean / se
    p = t_sf(t, n - 1) if alternative == "greater" else t_cdf(t, n - 1)
    return TTestResult(t, p, mean, se, n, alternative)


def match_rate(suggested: Iterable[str], realized_changed: Iterable[str]) -> float:
    """Share of suggested features that actually changed."""
    suggested = set(suggested)
    if not suggested:
        raise UndefinedRateError("match rate is undefined for an empty suggestion set")
    return len(suggested & set(realized_changed)) / len(suggested)


def mean_match_rate(pairs: Iterable) -> Optional[float]:
    """Average of per-row rates over ``(suggested, realized)`` pairs.

    Rows with an empty suggestion are skipped; returns None if none remain.
    """
    rates = []
    for suggested, realized in pairs:
        try:
            rates.append(match_rate(suggested, realized))
        except UndefinedRateError:
            continue
    return float(np.mean(rates)) if rates else None


@dataclass(frozen=True)
class RealChange:
    l0_full: int
    l0_relevant: int
    l2_full: float
    l2_relevant: float


def real_change_stats(x_before, x_after, w) -> RealChange:
    """Observed change between consecutive statements (original units).

    Counts use exact inequality on the raw values; the "relevant" variants
    restrict to modifiable coordinates (``w == 1``).
    """
    d = np.asarray(x_after, dtype=np.float64) - np.asarray(x_before, dtype=np.float64)
    w = np.asarray(w) > 0
    if d.shape != w.shape:
        raise InvalidInputError("rows and mask differ in length")
    changed = d != 0
    return RealChange(
        l0_full=int(np.count_nonzero(changed)),
        l0_relevant=int(np.count_nonzero(changed & w)),
        l2_full=float(np.sqrt(np.sum(d * d))),
        l2_relevant=float(np.sqrt(np.sum(d[w] ** 2))),
    )


def changed_feature_names(feature_names: Sequence[str], x_before, x_after) -> set:
    d = np.asarray(x_after, dtype=np.float64) - np.asarray(x_before, dtype=np.float64)
    return {name for name, v in zip(feature_names, d) if v != 0}


# --------------------------------------------------------------------------
# batch aggregations over result records


@dataclass(frozen=True)
class EffortRow:
    rating: int
    next_rating: int
    mean_l2: float
    mean_l0: float
    count: int
    unsolved: int


def effort_by_rating(records: Sequence) -> list:
    """Mean chosen-candidate effort per original rating.

    ``records`` need ``rating``, ``solved``, ``l0`` and ``l2`` attributes.
    Unsolved rows are excluded from the means and counted separately.
    Rows are ordered best rating first.
    """
    solved = defaultdict(list)
    unsolved = defaultdict(int)
    for r in records:
        if r.solved:
            solved[r.rating].append(r)
        else:
            unsolved[r.rating] += 1
    out = []
    for rating in sorted(set(solved) | set(unsolved)):
        rs = solved.get(rating, [])
        out.append(EffortRow(
            rating=rating,
            next_rating=rating - 1,
            mean_l2=float(np.mean([r.l2 for r in rs])) if rs else math.nan,
            mean_l0=float(np.mean([r.l0 for r in rs])) if rs else math.nan,
            count=len(rs),
            unsolved=unsolved.get(rating, 0),
        ))
    return out


@dataclass(frozen=True)
class LambdaTable:
    ladder: tuple
    ratings: tuple
    counts: np.ndarray  # (len(ladder), len(ratings))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def column(self, rating: int):
        return self.counts[:, self.ratings.index(rating)]


def lambda_table(records: Sequence, ladder: Sequence[float], ratings: Optional[Sequence[int]] = None) -> LambdaTable:
    """Count solved records by (stopping weight, original rating)."""
    ladder = tuple(float(v) for v in ladder)
    solved = [r for r in records if r.solved]
    if ratings is None:
        ratings = sorted({r.rating for r in solved})
    ratings = tuple(ratings)
    counts = np.zeros((len(ladder), len(ratings)), dtype=int)
    for r in solved:
        lam = float(r.lambda_used)
        if lam not in ladder:
            raise DataIntegrityError(f"row {r.row_id}: lambda_used {lam!r} is not on the ladder {ladder}")
        if r.rating not in ratings:
            raise DataIntegrityError(f"row {r.row_id}: rating {r.rating} not among table columns")
        counts[ladder.index(lam), ratings.index(r.rating)] += 1
    return LambdaTable(ladder, ratings, counts)
