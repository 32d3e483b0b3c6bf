"""Observed-data container and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import EmptyStratum, MissingColumn, ParseError, TooFewRows

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

MIN_STRATUM_ROWS = 3


def _frozen(a: ArrayLike, ndim: int, name: str) -> NDArray:
    arr = np.array(a, dtype=np.float64, ndmin=ndim)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """The observed triple (outcome ``y``, exposure ``t``, covariates ``z``).

    Arrays are copied and made read-only, so instances can be shared across
    workers. ``rows`` holds the original row index of every unit; it is the
    identity for data read from a file and a subset after stratification.
    """

    y: NDArray
    t: NDArray
    z: NDArray
    covariate_names: tuple[str, ...] = ()
    rows: NDArray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        y = _frozen(self.y, 1, "y")
        t = _frozen(self.t, 1, "t")
        z = np.asarray(self.z, dtype=np.float64)
        if z.ndim == 1:
            z = z.reshape(-1, 1)
        z = _frozen(z, 2, "z")
        n = y.shape[0]
        if t.shape[0] != n or z.shape[0] != n:
            raise ValueError(f"length mismatch: y={n}, t={t.shape[0]}, z rows={z.shape[0]}")
        names = tuple(self.covariate_names) or tuple(f"Z{j + 1}" for j in range(z.shape[1]))
        if len(names) != z.shape[1]:
            raise ValueError(f"{len(names)} covariate names for {z.shape[1]} columns")
        rows = np.arange(n) if self.rows is None else np.asarray(self.rows, dtype=np.int64)
        if rows.shape != (n,):
            raise ValueError("rows must have one index per unit")
        rows = rows.copy()
        rows.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    def take(self, index: ArrayLike) -> Dataset:
        """Sub-dataset (or resample, if ``index`` repeats) in the given order."""
        idx = np.asarray(index, dtype=np.int64)
        return Dataset(self.y[idx], self.t[idx], self.z[idx], self.covariate_names, self.rows[idx])


def _parse(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(row, col, text) from None
    if not np.isfinite(value):
        raise ParseError(row, col, text)
    return value


def load_csv(
    path: str | Path,
    outcome_col: str,
    exposure_col: str,
    covariate_cols: Sequence[str],
    *,
    drop_incomplete: bool = False,
) -> Dataset:
    """Read a header-first CSV into a :class:`Dataset`, keeping file row order.

    Unparseable or missing cells in referenced columns raise ParseError unless
    ``drop_incomplete`` is set, in which case those rows are filtered out
    before construction.
    """
    covariate_cols = list(covariate_cols)
    wanted = [outcome_col, exposure_col, *covariate_cols]
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumn(outcome_col) from None
        pos = {}
        for name in wanted:
            if name not in header:
                raise MissingColumn(name)
            pos[name] = header.index(name)
        records = []
        for r, line in enumerate(reader, start=1):
            if not line or all(not cell.strip() for cell in line):
                continue
            try:
                vals = []
                for name in wanted:
                    j = pos[name]
                    vals.append(_parse(line[j].strip() if j < len(line) else "", r, name))
            except ParseError:
                if drop_incomplete:
                    continue
                raise
            records.append(vals)
    p = len(covariate_cols)
    if len(records) < p + 3:
        raise TooFewRows(len(records), p + 3)
    data = np.array(records, dtype=np.float64).reshape(len(records), len(wanted))
    return Dataset(data[:, 0], data[:, 1], data[:, 2:], tuple(covariate_cols))


def write_csv(d: Dataset, path: str | Path, outcome_col: str = "y", exposure_col: str = "t") -> None:
    """Write ``d`` back to CSV; floats use ``repr`` so values round-trip exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([outcome_col, exposure_col, *d.covariate_names])
        for i in range(d.n):
            w.writerow([repr(float(d.y[i])), repr(float(d.t[i])), *(repr(float(v)) for v in d.z[i])])


def split_by_strata(d: Dataset, assignment: ArrayLike, l_count: int | None = None) -> list[Dataset]:
    """Partition ``d`` by 1-based stratum indices, keeping original row order within strata."""
    a = np.asarray(assignment)
    if a.shape != (d.n,):
        raise ValueError(f"assignment length {a.shape} does not match n={d.n}")
    if not np.issubdtype(a.dtype, np.integer):
        if not np.all(a == np.round(a)):
            raise ValueError("stratum indices must be integers")
        a = a.astype(np.int64)
    if l_count is None:
        l_count = int(a.max())
    if a.min() < 1 or a.max() > l_count:
        raise ValueError(f"stratum indices must lie in 1..{l_count}")
    out = []
    for stratum in range(1, l_count + 1):
        idx = np.flatnonzero(a == stratum)
        if idx.size < MIN_STRATUM_ROWS:
            raise EmptyStratum(stratum, int(idx.size))
        out.append(d.take(idx))
    return out
