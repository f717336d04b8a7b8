"""Tabular data loading, immutability masks, rating scales and feature scaling.

File formats
------------
* Tabular data: UTF-8 CSV, header row first.  A rating column (default
  ``rating``) is required; ``entity_id`` and ``period`` are optional
  identifier columns; every other column is a numeric feature.
* Mask file: one immutable feature name per line; lines starting with
  ``#`` are comments.
* Rating scale file: one symbol per line, best grade first.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError, InvalidInputError, ParseError, RatingLookupError, SchemaError

ID_COLUMNS = ("entity_id", "period")

SP_SYMBOLS = (
    "AAA", "AA+", "AA", "AA-", "A+", "A", "A-",
    "BBB+", "BBB", "BBB-",
    "BB+", "BB", "BB-", "B+", "B", "B-",
    "CCC+", "CCC", "CCC-", "CC", "C", "D",
)


def _norm_symbol(s: str) -> str:
    # accept the typographic minus as well as the ASCII hyphen
    return s.strip().replace("−", "-")


@dataclass(frozen=True)
class RatingScale:
    """Ordered grade symbols, best first.  Ordinal 1 is the best grade."""

    symbols: tuple = SP_SYMBOLS
    investment_floor: Optional[str] = "BBB-"

    def __post_init__(self):
        syms = tuple(_norm_symbol(s) for s in self.symbols)
        if not syms:
            raise ValueError("rating scale is empty")
        if len(set(syms)) != len(syms):
            raise ValueError("rating symbols must be unique")
        object.__setattr__(self, "symbols", syms)
        if self.investment_floor is not None and self.investment_floor not in syms:
            object.__setattr__(self, "investment_floor", None)

    def __len__(self):
        return len(self.symbols)

    def to_ordinal(self, symbol: str) -> int:
        try:
            return self.symbols.index(_norm_symbol(symbol)) + 1
        except ValueError:
            raise RatingLookupError(f"unknown rating symbol {symbol!r}") from None

    def to_symbol(self, ordinal: int) -> str:
        if isinstance(ordinal, bool) or not 1 <= int(ordinal) <= len(self.symbols) or int(ordinal) != ordinal:
            raise RatingLookupError(f"ordinal {ordinal!r} outside 1..{len(self.symbols)}")
        return self.symbols[int(ordinal) - 1]

    def is_investment_grade(self, ordinal: int) -> bool:
        if self.investment_floor is None:
            raise RatingLookupError("scale has no investment-grade boundary")
        return 1 <= ordinal <= self.to_ordinal(self.investment_floor)


DEFAULT_SCALE = RatingScale()


def rating_to_ordinal(scale: RatingScale, symbol: str) -> int:
    return scale.to_ordinal(symbol)


def ordinal_to_rating(scale: RatingScale, ordinal: int) -> str:
    return scale.to_symbol(ordinal)


def read_scale_file(path) -> RatingScale:
    symbols = [s for s in _read_name_lines(path)]
    try:
        return RatingScale(tuple(symbols))
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None


# --------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class Scaler:
    """Per-feature standardization with population standard deviations.

    Constant columns get std 1 so they pass through shifted only.
    """

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64)
        stds = np.array(self.stds, dtype=np.float64)
        if means.shape != stds.shape or means.ndim != 1:
            raise ValueError("means and stds must be 1-D arrays of equal length")
        if not np.all(stds > 0):
            raise ValueError("scaler stds must be positive")
        means.setflags(write=False)
        stds.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    def apply(self, rows):
        return (np.asarray(rows, dtype=np.float64) - self.means) / self.stds

    def invert(self, delta):
        """Standardized perturbation -> original units (means cancel in differences)."""
        return np.asarray(delta, dtype=np.float64) * self.stds

    def unapply(self, rows):
        return np.asarray(rows, dtype=np.float64) * self.stds + self.means

    def __eq__(self, other):
        return (isinstance(other, Scaler) and np.array_equal(self.means, other.means)
                and np.array_equal(self.stds, other.stds))

    __hash__ = None


def fit_scaler(rows) -> Scaler:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise InvalidInputError("fit_scaler needs at least 2 rows")
    means = rows.mean(axis=0)
    stds = rows.std(axis=0)
    stds[stds == 0] = 1.0
    return Scaler(means, stds)


def identity_scaler(n_features: int) -> Scaler:
    return Scaler(np.zeros(n_features), np.ones(n_features))


# --------------------------------------------------------------------------
# tabular data


@dataclass(frozen=True)
class TabularDataset:
    feature_names: tuple
    rows: np.ndarray
    ratings: np.ndarray
    entity_ids: Optional[tuple] = None
    periods: Optional[tuple] = None

    def __post_init__(self):
        names = tuple(self.feature_names)
        rows = np.asarray(self.rows, dtype=np.float64)
        ratings = np.asarray(self.ratings, dtype=int)
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        if rows.ndim != 2 or rows.shape[1] != len(names):
            raise SchemaError(f"rows have shape {rows.shape}, expected (n, {len(names)})")
        if ratings.shape != (rows.shape[0],):
            raise SchemaError("one rating per row required")
        for attr in ("entity_ids", "periods"):
            col = getattr(self, attr)
            if col is not None:
                col = tuple(str(c) for c in col)
                if len(col) != rows.shape[0]:
                    raise SchemaError(f"{attr} length does not match row count")
                object.__setattr__(self, attr, col)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "ratings", ratings)

    @property
    def n_samples(self) -> int:
        return self.rows.shape[0]

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    def find(self, entity_id: str, period: str) -> int:
        if self.entity_ids is None or self.periods is None:
            raise SchemaError("dataset has no entity_id/period columns")
        for i, (e, p) in enumerate(zip(self.entity_ids, self.periods)):
            if e == entity_id and p == period:
                return i
        raise KeyError(f"no row for entity {entity_id!r} period {period!r}")


def _parse_rating(cell: str, scale: Optional[RatingScale], row: int, col: int) -> int:
    text = cell.strip()
    try:
        value = int(text)
    except ValueError:
        if scale is None:
            raise ParseError(f"row {row}, col {col}: rating {text!r} is not an ordinal", row, col) from None
        try:
            return scale.to_ordinal(text)
        except RatingLookupError:
            raise ParseError(f"row {row}, col {col}: unknown rating {text!r}", row, col) from None
    if scale is not None and not 1 <= value <= len(scale):
        raise ParseError(f"row {row}, col {col}: ordinal {value} outside 1..{len(scale)}", row, col)
    if value < 1:
        raise ParseError(f"row {row}, col {col}: ordinal {value} < 1", row, col)
    return value


def load_table(path, rating_column: str = "rating", scale: Optional[RatingScale] = DEFAULT_SCALE) -> TabularDataset:
    """Read a CSV file.  Rows and columns in error messages are 1-based
    (row 1 is the first data row, column 1 the first column)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if rating_column not in header:
            raise SchemaError(f"{path}: missing rating column {rating_column!r}")
        dupes = sorted({h for h in header if header.count(h) > 1})
        if dupes:
            raise SchemaError(f"{path}: duplicate column names {dupes}")
        r_idx = header.index(rating_column)
        id_idx = {c: header.index(c) for c in ID_COLUMNS if c in header}
        feat_idx = [j for j, h in enumerate(header) if j != r_idx and j not in id_idx.values()]

        rows, ratings = [], []
        ids = {c: [] for c in id_idx}
        for i, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise ParseError(f"{path}: row {i} has {len(record)} cells, header has {len(header)}", i, len(record))
            values = []
            for j in feat_idx:
                try:
                    v = float(record[j])
                except ValueError:
                    raise ParseError(f"{path}: row {i}, col {j + 1} ({header[j]}): "
                                     f"non-numeric value {record[j]!r}", i, j + 1) from None
                if not math.isfinite(v):
                    raise ParseError(f"{path}: row {i}, col {j + 1} ({header[j]}): non-finite value", i, j + 1)
                values.append(v)
            rows.append(values)
            ratings.append(_parse_rating(record[r_idx], scale, i, r_idx + 1))
            for c, j in id_idx.items():
                ids[c].append(record[j])

    return TabularDataset(
        feature_names=tuple(header[j] for j in feat_idx),
        rows=np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_idx)),
        ratings=np.array(ratings, dtype=int),
        entity_ids=tuple(ids["entity_id"]) if "entity_id" in ids else None,
        periods=tuple(ids["period"]) if "period" in ids else None,
    )


def write_table(dataset: TabularDataset, path, rating_column: str = "rating",
                scale: Optional[RatingScale] = None) -> None:
    """Write a dataset in the format :func:`load_table` reads.

    Ratings are written as symbols when ``scale`` is given, else as ordinals.
    """
    header = []
    if dataset.entity_ids is not None:
        header.append("entity_id")
    if dataset.periods is not None:
        header.append("period")
    header += list(dataset.feature_names) + [rating_column]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(dataset.n_samples):
            rec = []
            if dataset.entity_ids is not None:
                rec.append(dataset.entity_ids[i])
            if dataset.periods is not None:
                rec.append(dataset.periods[i])
            rec += [repr(float(v)) for v in dataset.rows[i]]
            r = int(dataset.ratings[i])
            rec.append(scale.to_symbol(r) if scale is not None else str(r))
            writer.writerow(rec)


# --------------------------------------------------------------------------
# masks


@dataclass(frozen=True)
class MaskSpec:
    immutable_names: frozenset
    w: np.ndarray
    unknown: tuple = ()

    @property
    def n_modifiable(self) -> int:
        return int(self.w.sum())


def build_mask(feature_names: Sequence[str], immutable_names: Iterable[str]) -> MaskSpec:
    """w_i = 0 for immutable features, 1 otherwise.

    Immutable names that are not present among the features are reported
    with a warning and listed in ``MaskSpec.unknown``.
    """
    immutable = frozenset(immutable_names)
    w = np.array([0.0 if n in immutable else 1.0 for n in feature_names])
    w.setflags(write=False)
    unknown = tuple(sorted(immutable - set(feature_names)))
    if unknown:
        warnings.warn(f"{len(unknown)} immutable names not among features: {list(unknown[:5])}"
                      + (" ..." if len(unknown) > 5 else ""), stacklevel=2)
    return MaskSpec(immutable, w, unknown)


def _read_name_lines(path) -> list:
    names = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        s = line.strip()
        if s and not s.startswith("#"):
            names.append(s)
    return names


def read_mask_file(path) -> list:
    return _read_name_lines(path)


def write_name_lines(names: Iterable[str], path, comment: Optional[str] = None) -> None:
    lines = [f"# {comment}"] if comment else []
    lines += list(names)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# packaged name lists


def _packaged(name: str) -> list:
    text = resources.files("counterfact.data").joinpath(name).read_text(encoding="utf-8")
    return [s.strip() for s in text.splitlines() if s.strip() and not s.strip().startswith("#")]


def immutable_reference_names() -> list:
    """Accounting variables treated as not feasibly changeable."""
    return _packaged("immutable_features.txt")


def modifiable_reference_names() -> list:
    return _packaged("modifiable_features.txt")


# (feature count after cleaning, modifiable count)
SECTOR_SIZES = {
    "healthcare": (296, 87),
    "it": (296, 87),
    "financial": (294, 86),
}


def statement_feature_names(n_features: int, n_modifiable: int) -> tuple:
    """Build a feature universe of ``n_features`` names with exactly
    ``n_modifiable`` names outside the immutable reference list.

    Reference names are used first; numbered filler names pad either side
    when the reference lists are too short.
    """
    if not 0 <= n_modifiable <= n_features:
        raise ContractError("need 0 <= n_modifiable <= n_features")
    mod = modifiable_reference_names()[:n_modifiable]
    mod += [f"Operating Item {i:03d}" for i in range(1, n_modifiable - len(mod) + 1)]
    n_imm = n_features - n_modifiable
    imm = immutable_reference_names()[:n_imm]
    imm += [f"Scheduled Adjustment {i:03d}" for i in range(1, n_imm - len(imm) + 1)]
    return tuple(mod + imm)


def statement_immutable_names(feature_names: Sequence[str]) -> list:
    """Names in ``feature_names`` that belong to the packaged immutable set
    (including numbered filler adjustments)."""
    ref = set(immutable_reference_names())
    return [n for n in feature_names if n in ref or n.startswith("Scheduled Adjustment ")]


def sector_feature_names(sector: str) -> tuple:
    try:
        n, k = SECTOR_SIZES[sector]
    except KeyError:
        raise ContractError(f"unknown sector {sector!r}; choose from {sorted(SECTOR_SIZES)}") from None
    return statement_feature_names(n, k)


def sector_immutable_names(sector: str) -> list:
    """The immutable list that goes with :func:`sector_feature_names`."""
    return statement_immutable_names(sector_feature_names(sector))
