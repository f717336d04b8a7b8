"""Tabular reports built from result records.

Four layouts are produced:

* ``comparison``   -- GD vs sparsity effort per rating transition, with
  matched-pairs one-sided t-tests (mean difference and its standard error
  are reported explicitly);
* ``real_change``  -- observed next-period changes vs suggested changes,
  plus the match rate, averaged over company-quarters whose rating improved;
* ``effort``       -- mean effort by original rating;
* ``lambda``       -- counts of solved rows by stopping weight and rating.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateSampleError, InvalidInputError
from .evaluation import (
    TTestResult, changed_feature_names, effort_by_rating, lambda_table, mean_match_rate,
    paired_t_one_sided, real_change_stats,
)
from .ingest import RatingScale, TabularDataset

REPORT_FILES = {
    "comparison": "comparison.csv",
    "real_change": "real_change.csv",
    "effort": "effort_by_rating.csv",
    "lambda": "lambda_table.csv",
}


def _sym(scale: Optional[RatingScale], ordinal: int) -> str:
    if scale is not None and 1 <= ordinal <= len(scale):
        return scale.to_symbol(ordinal)
    return str(ordinal)


def _fmt(v, digits=5) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{v:.{digits}f}"


def _safe_test(a, b, alternative) -> Optional[TTestResult]:
    try:
        return paired_t_one_sided(a, b, alternative)
    except (DegenerateSampleError, InvalidInputError):
        return None


# --------------------------------------------------------------------------
# GD vs sparsity


@dataclass(frozen=True)
class ComparisonRow:
    from_rating: int
    to_rating: int
    n: int
    l2_sparsity: float
    l2_gd: float
    l2_test: Optional[TTestResult]   # d = GD - sparsity, H1: mean(d) > 0
    l0_sparsity: float
    l0_gd: float
    l0_test: Optional[TTestResult]   # d = sparsity - GD, H1: mean(d) < 0


def compare_methods(sparsity_records: Sequence, gd_records: Sequence) -> list:
    """Pair records by ``row_id`` (both solved) and test per transition."""
    gd_by_id = {r.row_id: r for r in gd_records}
    groups = defaultdict(list)
    for s in sparsity_records:
        g = gd_by_id.get(s.row_id)
        if g is not None and s.solved and g.solved:
            groups[(s.predicted_before, s.target)].append((s, g))
    rows = []
    for (frm, to) in sorted(groups, key=lambda k: (-k[0], -k[1])):
        pairs = groups[(frm, to)]
        sl2 = np.array([s.l2 for s, _ in pairs])
        gl2 = np.array([g.l2 for _, g in pairs])
        sl0 = np.array([s.l0 for s, _ in pairs], dtype=float)
        gl0 = np.array([g.l0 for _, g in pairs], dtype=float)
        rows.append(ComparisonRow(
            frm, to, len(pairs),
            float(sl2.mean()), float(gl2.mean()), _safe_test(gl2, sl2, "greater"),
            float(sl0.mean()), float(gl0.mean()), _safe_test(sl0, gl0, "less"),
        ))
    return rows


def write_comparison(rows: Sequence[ComparisonRow], path, scale: Optional[RatingScale] = None) -> None:
    header = ["transition", "n", "l2_sparsity", "l2_gd", "l2_diff_gd_minus_sparsity", "l2_diff_se",
              "l2_t", "l2_p_greater", "l0_sparsity", "l0_gd", "l0_diff_gd_minus_sparsity", "l0_diff_se",
              "l0_t", "l0_p_less_sparsity_minus_gd"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            l2, l0 = r.l2_test, r.l0_test
            w.writerow([
                f"{_sym(scale, r.from_rating)} to {_sym(scale, r.to_rating)}", r.n,
                _fmt(r.l2_sparsity), _fmt(r.l2_gd),
                _fmt(l2.mean_diff if l2 else None), _fmt(l2.std_err if l2 else None),
                _fmt(l2.statistic if l2 else None, 4), _fmt(l2.p_value if l2 else None, 6),
                _fmt(r.l0_sparsity), _fmt(r.l0_gd),
                # sign flipped so the column reads GD - sparsity like the L2 one
                _fmt(-l0.mean_diff if l0 else None), _fmt(l0.std_err if l0 else None),
                _fmt(l0.statistic if l0 else None, 4), _fmt(l0.p_value if l0 else None, 6),
            ])


# --------------------------------------------------------------------------
# observed next-period change


def next_period_rows(dataset: TabularDataset) -> dict:
    """Map each row index to the row of the same entity in the next period."""
    if dataset.entity_ids is None or dataset.periods is None:
        raise InvalidInputError("real-change reports need entity_id and period columns")
    by_entity = defaultdict(list)
    for i, (e, p) in enumerate(zip(dataset.entity_ids, dataset.periods)):
        by_entity[e].append((p, i))
    nxt = {}
    for rows in by_entity.values():
        rows.sort()
        for (_, a), (_, b) in zip(rows, rows[1:]):
            nxt[a] = b
    return nxt


@dataclass(frozen=True)
class RealChangeSummary:
    n_rows: int
    real_l0: float
    real_l2: float
    relevant_l0: float
    relevant_l2: float
    gd_l0: float
    gd_l2: float
    sparsity_l0: float
    sparsity_l2: float
    match_rate: Optional[float]


def real_change_summary(sparsity_records: Sequence, gd_records: Sequence, dataset: TabularDataset, w) -> RealChangeSummary:
    """Average over company-quarters whose rating improved next period and
    for which the sparsity run was solved."""
    nxt = next_period_rows(dataset)
    gd_by_id = {r.row_id: r for r in gd_records}
    real, sp, gd, pairs = [], [], [], []
    for s in sparsity_records:
        j = nxt.get(s.row_id)
        if j is None or not s.solved or dataset.ratings[j] >= dataset.ratings[s.row_id]:
            continue
        before, after = dataset.rows[s.row_id], dataset.rows[j]
        real.append(real_change_stats(before, after, w))
        sp.append(s)
        g = gd_by_id.get(s.row_id)
        if g is not None and g.solved:
            gd.append(g)
        pairs.append((set(s.changed_feature_names), changed_feature_names(dataset.feature_names, before, after)))

    def mean(values):
        return float(np.mean(values)) if len(values) else math.nan

    return RealChangeSummary(
        n_rows=len(real),
        real_l0=mean([r.l0_full for r in real]), real_l2=mean([r.l2_full for r in real]),
        relevant_l0=mean([r.l0_relevant for r in real]), relevant_l2=mean([r.l2_relevant for r in real]),
        gd_l0=mean([g.l0 for g in gd]), gd_l2=mean([g.l2 for g in gd]),
        sparsity_l0=mean([s.l0 for s in sp]), sparsity_l2=mean([s.l2 for s in sp]),
        match_rate=mean_match_rate(pairs),
    )


def write_real_change(summary: RealChangeSummary, path) -> None:
    s = summary
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["norm", "real_change", "real_change_relevant", "change_gd", "change_sparsity",
                     "match_rate", "n_company_quarters"])
        w.writerow(["L0", _fmt(s.real_l0, 2), _fmt(s.relevant_l0, 2), _fmt(s.gd_l0, 2), _fmt(s.sparsity_l0, 2),
                    _fmt(s.match_rate, 4), s.n_rows])
        w.writerow(["L2", _fmt(s.real_l2, 2), _fmt(s.relevant_l2, 2), _fmt(s.gd_l2, 2), _fmt(s.sparsity_l2, 2),
                    "", s.n_rows])


# --------------------------------------------------------------------------
# effort by rating / lambda table


def write_effort(records: Sequence, path, scale: Optional[RatingScale] = None) -> list:
    rows = effort_by_rating(records)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rating", "next_rating", "mean_l2", "mean_l0", "count", "unsolved"])
        for r in rows:
            w.writerow([_sym(scale, r.rating), _sym(scale, r.next_rating), _fmt(r.mean_l2, 1),
                        _fmt(r.mean_l0, 1), r.count, r.unsolved])
        solved = [r for r in records if r.solved]
        if solved:
            w.writerow(["average", "", _fmt(float(np.mean([r.l2 for r in solved])), 1),
                        _fmt(float(np.mean([r.l0 for r in solved])), 1), len(solved), ""])
    return rows


def write_lambda(records: Sequence, ladder, path, scale: Optional[RatingScale] = None):
    table = lambda_table(records, ladder)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda"] + [_sym(scale, r) for r in table.ratings])
        for lam, counts in zip(table.ladder, table.counts):
            w.writerow([f"{lam:g}"] + [int(c) for c in counts])
    return table


# --------------------------------------------------------------------------
# plain-text summary


def render_summary(comparison=None, real_change=None, effort=None, lam=None,
                   scale: Optional[RatingScale] = None) -> str:
    out = []
    if comparison:
        out.append("GD vs sparsity (paired by row; diff = GD - sparsity, standard error in parentheses)")
        out.append(f"{'transition':<14}{'n':>6}{'L2 sp':>13}{'L2 GD':>13}{'L2 diff (se)':>26}{'p':>10}"
                   f"{'L0 sp':>9}{'L0 GD':>9}{'L0 diff (se)':>22}{'p':>10}")
        for r in comparison:
            l2, l0 = r.l2_test, r.l0_test
            l2s = f"{l2.mean_diff:.6g} ({l2.std_err:.4g})" if l2 else "n/a"
            l0s = f"{-l0.mean_diff:.5f} ({l0.std_err:.5f})" if l0 else "n/a"
            out.append(f"{_sym(scale, r.from_rating) + ' to ' + _sym(scale, r.to_rating):<14}{r.n:>6}"
                       f"{r.l2_sparsity:>13.6g}{r.l2_gd:>13.6g}{l2s:>26}{(l2.p_value if l2 else math.nan):>10.2g}"
                       f"{r.l0_sparsity:>9.4f}{r.l0_gd:>9.4f}{l0s:>22}{(l0.p_value if l0 else math.nan):>10.2g}")
        out.append("")
    if real_change is not None:
        s = real_change
        mr = "n/a" if s.match_rate is None else f"{100 * s.match_rate:.2f}%"
        out.append(f"Observed vs suggested change ({s.n_rows} company-quarters with an upgrade)")
        out.append(f"{'':<4}{'real':>12}{'relevant':>12}{'GD':>12}{'sparsity':>12}{'match':>10}")
        out.append(f"{'L0':<4}{s.real_l0:>12.2f}{s.relevant_l0:>12.2f}{s.gd_l0:>12.2f}{s.sparsity_l0:>12.2f}{mr:>10}")
        out.append(f"{'L2':<4}{s.real_l2:>12.2f}{s.relevant_l2:>12.2f}{s.gd_l2:>12.2f}{s.sparsity_l2:>12.2f}")
        out.append("")
    if effort:
        out.append("Average effort by rating")
        out.append(f"{'rating':<8}{'next':<8}{'L2':>14}{'L0':>8}{'count':>7}{'unsolved':>10}")
        for r in effort:
            out.append(f"{_sym(scale, r.rating):<8}{_sym(scale, r.next_rating):<8}{r.mean_l2:>14.1f}"
                       f"{r.mean_l0:>8.1f}{r.count:>7}{r.unsolved:>10}")
        out.append("")
    if lam is not None:
        out.append("Solved rows by stopping lambda")
        out.append(f"{'lambda':>8}" + "".join(f"{_sym(scale, r):>7}" for r in lam.ratings))
        for v, counts in zip(lam.ladder, lam.counts):
            out.append(f"{v:>8g}" + "".join(f"{int(c):>7}" for c in counts))
        out.append("")
    return "\n".join(out)
