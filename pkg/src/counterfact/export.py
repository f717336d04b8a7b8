"""Per-row result records and their CSV form.

One row per explained input.  List-valued fields (changed feature names
and the matching original-unit changes) are joined with ``|``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import SchemaError
from .solver import CfProblem
from .sparsity import SOLVED, SparsityResult

LIST_SEP = "|"

COLUMNS = (
    "row_id", "entity_id", "period", "rating", "target", "method", "outcome",
    "lambda_used", "rounds_used", "sparsity_level", "l0", "l1", "l2",
    "changed_feature_names", "delta_original_units", "predicted_before", "predicted_after",
)


@dataclass(frozen=True)
class ResultRecord:
    row_id: int
    entity_id: str
    period: str
    rating: int
    target: int
    method: str
    outcome: str
    lambda_used: float
    rounds_used: int
    sparsity_level: int
    l0: int
    l1: float
    l2: float
    changed_feature_names: tuple
    delta_original_units: tuple
    predicted_before: int
    predicted_after: int

    @property
    def solved(self) -> bool:
        return self.outcome == SOLVED


def record_from_result(result: SparsityResult, problem: CfProblem, *, row_id: int, feature_names: Sequence[str],
                       method: str, rating: Optional[int] = None, entity_id: str = "", period: str = "",
                       nonzero_tol: float = 1e-8) -> ResultRecord:
    before = problem.original_ordinal
    if result.solved:
        c = result.chosen
        support = np.flatnonzero(np.abs(c.delta) > nonzero_tol)
        orig = c.delta * problem.unit_scale
        names = tuple(feature_names[j] for j in support)
        values = tuple(float(orig[j]) for j in support)
        level, l0, l1, l2, after = c.sparsity_level, c.l0, c.l1, c.l2, c.predicted_ordinal
    else:
        names, values = (), ()
        level, l0, l1, l2, after = 0, 0, 0.0, 0.0, before
    return ResultRecord(
        row_id=row_id, entity_id=entity_id, period=period,
        rating=before if rating is None else int(rating),
        target=problem.target_ordinal, method=method, outcome=result.outcome,
        lambda_used=result.lambda_used, rounds_used=result.rounds_used,
        sparsity_level=level, l0=l0, l1=l1, l2=l2,
        changed_feature_names=names, delta_original_units=values,
        predicted_before=before, predicted_after=after,
    )


def _cell(value):
    if isinstance(value, tuple):
        return LIST_SEP.join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results(records: Sequence[ResultRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in records:
            writer.writerow([_cell(getattr(r, c)) for c in COLUMNS])


_INT = {"row_id", "rating", "target", "rounds_used", "sparsity_level", "l0", "predicted_before", "predicted_after"}
_FLOAT = {"lambda_used", "l1", "l2"}


def read_results(path) -> list:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise SchemaError(f"{path}: result file lacks columns {missing}")
        out = []
        for i, row in enumerate(reader, start=1):
            kw = {}
            try:
                for f in fields(ResultRecord):
                    raw = row[f.name]
                    if f.name in _INT:
                        kw[f.name] = int(raw)
                    elif f.name in _FLOAT:
                        kw[f.name] = float(raw)
                    elif f.name == "changed_feature_names":
                        kw[f.name] = tuple(raw.split(LIST_SEP)) if raw else ()
                    elif f.name == "delta_original_units":
                        kw[f.name] = tuple(float(v) for v in raw.split(LIST_SEP)) if raw else ()
                    else:
                        kw[f.name] = raw
            except ValueError as exc:
                raise SchemaError(f"{path}: row {i}, column {f.name!r}: {exc}") from None
            out.append(ResultRecord(**kw))
    return out
