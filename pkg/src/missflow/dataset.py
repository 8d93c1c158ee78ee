"""Masked tabular data: pattern partitioning, standardization, CSV I/O.

A dataset is an n x d float matrix together with an n x d boolean mask
(True = missing). Masked entries hold NaN sentinels but the mask is
authoritative: checked reads go through :meth:`MaskedDataset.value_at`,
which refuses to return a masked cell.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_MISSING_TOKEN = "NA"

__all__ = [
    "DataError",
    "FullyMissingColumnError",
    "MaskedReadError",
    "MaskedDataset",
    "Pattern",
    "PatternGroup",
    "Standardizer",
    "load_csv",
    "write_csv",
    "partition_by_pattern",
    "fit_standardizer",
    "apply_standardizer",
]


class DataError(ValueError):
    """Malformed or unusable input data."""


class FullyMissingColumnError(DataError):
    """A column has no observed entries."""


class MaskedReadError(LookupError):
    """A masked entry was requested through the checked accessor."""


@dataclass(frozen=True)
class MaskedDataset:
    """Float matrix with missing entries marked by a boolean mask.

    Parameters
    ----------
    values : (n, d) ndarray
        Data matrix; entries under the mask are NaN sentinels.
    mask : (n, d) ndarray of bool
        True where the entry is missing.
    column_names : sequence of str
        One name per column.
    """

    values: np.ndarray
    mask: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        mask = np.array(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"need a nonempty 2-d matrix, got shape {values.shape}")
        if mask.shape != values.shape:
            raise DataError(f"mask shape {mask.shape} != values shape {values.shape}")
        names = tuple(str(c) for c in self.column_names)
        if len(names) != values.shape[1]:
            raise DataError(f"{len(names)} column names for {values.shape[1]} columns")
        fully_missing = mask.all(axis=0)
        if fully_missing.any():
            bad = ", ".join(names[j] for j in np.flatnonzero(fully_missing))
            raise FullyMissingColumnError(f"column(s) with no observed entries: {bad}")
        if not np.isfinite(values[~mask]).all():
            raise DataError("non-finite observed entry")
        values[mask] = np.nan
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "column_names", names)

    @classmethod
    def complete(cls, matrix: np.ndarray, column_names: Sequence[str] | None = None) -> "MaskedDataset":
        """Wrap a fully observed matrix (mask all False)."""
        matrix = np.asarray(matrix, dtype=np.float64)
        if column_names is None:
            column_names = default_column_names(matrix.shape[1])
        return cls(matrix, np.zeros(matrix.shape, dtype=bool), tuple(column_names))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def is_complete(self) -> bool:
        return not self.mask.any()

    def value_at(self, i: int, j: int) -> float:
        """Checked read of one cell; raises on a masked entry."""
        if self.mask[i, j]:
            raise MaskedReadError(f"entry ({i}, {j}) is missing")
        return float(self.values[i, j])

    def observed_column(self, j: int) -> np.ndarray:
        """All observed entries of column j, in row order."""
        return self.values[~self.mask[:, j], j]

    def require_complete(self) -> np.ndarray:
        """Return the value matrix, erroring if any entry is missing."""
        if not self.is_complete:
            raise DataError("dataset contains missing entries")
        return self.values


def default_column_names(d: int) -> tuple[str, ...]:
    return tuple(f"x{j + 1}" for j in range(d))


@dataclass(frozen=True)
class Pattern:
    """One missingness pattern over d columns (True = missing)."""

    missing: tuple[bool, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "missing", tuple(bool(b) for b in self.missing))
        if len(self.missing) < 1:
            raise DataError("empty pattern")

    @property
    def d(self) -> int:
        return len(self.missing)

    @property
    def observed_idx(self) -> np.ndarray:
        """Strictly increasing indices of the observed columns."""
        return np.flatnonzero(~np.asarray(self.missing, dtype=bool))

    @property
    def n_observed(self) -> int:
        return self.d - sum(self.missing)

    @property
    def all_observed(self) -> bool:
        return not any(self.missing)

    @property
    def all_missing(self) -> bool:
        return all(self.missing)


@dataclass(frozen=True)
class PatternGroup:
    """Rows sharing one pattern, restricted to its observed columns.

    ``rows`` is (n_rows, pattern.n_observed) and fully finite;
    ``row_indices`` maps back into the source dataset.
    """

    pattern: Pattern
    rows: np.ndarray
    row_indices: np.ndarray

    def __post_init__(self) -> None:
        rows = np.array(self.rows, dtype=np.float64)
        idx = np.array(self.row_indices, dtype=np.intp)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise DataError("pattern group needs at least one row")
        if rows.shape[1] != self.pattern.n_observed:
            raise DataError(
                f"rows have {rows.shape[1]} columns, pattern observes {self.pattern.n_observed}"
            )
        if idx.shape != (rows.shape[0],):
            raise DataError("row_indices must align with rows")
        if not np.isfinite(rows).all():
            raise DataError("non-finite entry in pattern group")
        rows.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "row_indices", idx)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]


def partition_by_pattern(ds: MaskedDataset) -> list[PatternGroup]:
    """Split rows by distinct mask row, ordered lexicographically on the bits.

    Rows missing every column carry no observed information and are excluded
    with a warning.
    """
    unique_rows, inverse = np.unique(ds.mask, axis=0, return_inverse=True)
    groups: list[PatternGroup] = []
    for k, bits in enumerate(unique_rows):
        pattern = Pattern(tuple(bits))
        idx = np.flatnonzero(inverse == k)
        if pattern.all_missing:
            logger.warning(
                "excluding %d fully missing row(s) from the pattern partition", len(idx)
            )
            continue
        rows = ds.values[np.ix_(idx, pattern.observed_idx)]
        groups.append(PatternGroup(pattern, rows, idx))
    return groups


@dataclass(frozen=True)
class Standardizer:
    """Column-wise affine transform fitted on observed entries only."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=np.float64)
        scale = np.array(self.scale, dtype=np.float64)
        if mean.ndim != 1 or mean.shape != scale.shape:
            raise DataError("mean and scale must be equal-length vectors")
        if not (np.isfinite(mean).all() and np.isfinite(scale).all()):
            raise DataError("non-finite standardizer parameters")
        if (scale <= 0).any():
            raise DataError("non-positive column scale")
        mean.setflags(write=False)
        scale.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    @property
    def d(self) -> int:
        return self.mean.shape[0]


def fit_standardizer(ds: MaskedDataset) -> Standardizer:
    """Per-column mean and sample standard deviation over observed entries.

    Requires at least two observed entries and nonzero variance per column.
    """
    mean = np.empty(ds.d)
    scale = np.empty(ds.d)
    for j in range(ds.d):
        col = ds.observed_column(j)
        if col.size < 2:
            raise DataError(f"column {ds.column_names[j]!r} has fewer than 2 observed entries")
        mean[j] = col.mean()
        scale[j] = col.std(ddof=1)
        if scale[j] <= 0:
            raise DataError(f"column {ds.column_names[j]!r} has zero variance")
    return Standardizer(mean, scale)


def apply_standardizer(
    data: MaskedDataset | np.ndarray,
    s: Standardizer,
    direction: str = "forward",
) -> MaskedDataset | np.ndarray:
    """Map columns to zero-mean unit-scale coordinates or back.

    Accepts a dataset (observed entries transformed, mask unchanged) or a
    plain complete matrix. ``direction`` is "forward" or "inverse".
    """
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    if isinstance(data, MaskedDataset):
        if data.d != s.d:
            raise DataError(f"standardizer is {s.d}-dimensional, dataset has {data.d} columns")
        values = np.array(data.values)
        observed = ~data.mask
        if direction == "forward":
            values[observed] = ((values - s.mean) / s.scale)[observed]
        else:
            values[observed] = (values * s.scale + s.mean)[observed]
        return MaskedDataset(values, data.mask, data.column_names)
    matrix = np.asarray(data, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != s.d:
        raise DataError(f"standardizer is {s.d}-dimensional, matrix has shape {matrix.shape}")
    if direction == "forward":
        return (matrix - s.mean) / s.scale
    return matrix * s.scale + s.mean


def load_csv(path: str | Path, missing_token: str = DEFAULT_MISSING_TOKEN) -> MaskedDataset:
    """Read a headered CSV; cells equal to ``missing_token`` or empty are missing."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        names = tuple(c.strip() for c in header)
        d = len(names)
        if d < 1:
            raise DataError(f"{path}: header has no columns")
        rows: list[list[float]] = []
        mask_rows: list[list[bool]] = []
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != d:
                raise DataError(f"{path}:{lineno}: expected {d} cells, got {len(cells)}")
            row = []
            mrow = []
            for j, cell in enumerate(cells):
                cell = cell.strip()
                if cell == missing_token or cell == "":
                    row.append(np.nan)
                    mrow.append(True)
                else:
                    try:
                        row.append(float(cell))
                    except ValueError:
                        raise DataError(
                            f"{path}:{lineno}: cell {j + 1} ({cell!r}) is not a number"
                        ) from None
                    mrow.append(False)
            rows.append(row)
            mask_rows.append(mrow)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return MaskedDataset(np.array(rows), np.array(mask_rows), names)


def write_csv(
    ds: MaskedDataset,
    path: str | Path,
    missing_token: str = DEFAULT_MISSING_TOKEN,
) -> None:
    """Write the dataset back to CSV with 17-significant-digit floats."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(ds.column_names) + "\n")
        for i in range(ds.n):
            cells = [
                missing_token if ds.mask[i, j] else format(ds.values[i, j], ".17g")
                for j in range(ds.d)
            ]
            fh.write(",".join(cells) + "\n")
