"""Count datasets and their CSV format.

The on-disk format is deliberately minimal: a header of comma-separated
column names, then one row of nonnegative decimal integers per sample.
No quoting, LF line endings.
"""

from __future__ import annotations

import io
import logging
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)


class DataError(ValueError):
    pass


class Dataset:
    """An n x p matrix of nonnegative integer counts with column names."""

    def __init__(self, values, columns: Sequence[str] | None = None):
        arr = np.asarray(values)
        if arr.ndim != 2:
            raise DataError(f"expected a 2-d array, got shape {arr.shape}")
        if arr.size and not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.isfinite(arr)) or not np.all(arr == np.round(arr)):
                raise DataError("dataset entries must be integers")
        arr = arr.astype(np.int64)
        if arr.size and arr.min() < 0:
            i, j = np.argwhere(arr < 0)[0]
            raise DataError(f"negative count at row {i}, column {j}")
        if columns is None:
            columns = [f"X{j}" for j in range(arr.shape[1])]
        columns = tuple(str(c) for c in columns)
        if len(columns) != arr.shape[1]:
            raise DataError(f"{len(columns)} column names for {arr.shape[1]} columns")
        arr.setflags(write=False)
        self.values = arr
        self.columns = columns
        self._lists: dict[int, list[int]] = {}

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]

    def column_list(self, j: int) -> list[int]:
        """Column j as a Python list (cached); used by the cell-grouping loops."""
        out = self._lists.get(j)
        if out is None:
            out = self._lists[j] = self.values[:, j].tolist()
        return out

    def constant_columns(self) -> list[int]:
        if self.n == 0:
            return list(range(self.p))
        return [j for j in range(self.p) if np.all(self.values[:, j] == self.values[0, j])]

    def select(self, columns: Sequence[int]) -> Dataset:
        return Dataset(self.values[:, list(columns)], [self.columns[j] for j in columns])

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.columns == other.columns
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"Dataset(n={self.n}, p={self.p})"


def to_csv_text(data: Dataset) -> str:
    buf = io.StringIO()
    buf.write(",".join(data.columns) + "\n")
    np.savetxt(buf, data.values, fmt="%d", delimiter=",", newline="\n")
    return buf.getvalue()


def write_csv(path: str | Path, data: Dataset) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(to_csv_text(data))


def _parse_rows(path, lines, ncol, start_line):
    rows = []
    for lineno, raw in enumerate(lines, start=start_line):
        if not raw.strip():
            continue
        cells = raw.split(",")
        if len(cells) != ncol:
            raise DataError(f"{path}:{lineno}: expected {ncol} fields, got {len(cells)}")
        rows.append((lineno, cells))
    return rows


def _to_count(path, lineno, name, cell):
    text = cell.strip()
    try:
        value = int(text)
    except ValueError:
        raise DataError(f"{path}:{lineno}: column {name!r} has non-integer value {text!r}") from None
    if value < 0:
        raise DataError(f"{path}:{lineno}: column {name!r} has negative value {value}")
    return value


def read_csv(path: str | Path) -> Dataset:
    """Read a dataset CSV, reporting bad cells by line number and column."""
    return ingest_real_csv(path, ())


def ingest_real_csv(path: str | Path, drop_columns: Sequence[str] = ()) -> Dataset:
    """Load a headered count CSV, dropping the named columns first.

    Unknown names in ``drop_columns`` are logged and ignored.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if len(set(header)) != len(header):
        raise DataError(f"{path}:1: duplicate column names")
    drops = set(drop_columns)
    for name in sorted(drops - set(header)):
        log.warning("drop column %r not present in %s", name, path)
    keep = [j for j, h in enumerate(header) if h not in drops]
    rows = _parse_rows(path, lines[1:], len(header), start_line=2)
    values = np.empty((len(rows), len(keep)), dtype=np.int64)
    for i, (lineno, cells) in enumerate(rows):
        for out_j, j in enumerate(keep):
            values[i, out_j] = _to_count(path, lineno, header[j], cells[j])
    return Dataset(values, [header[j] for j in keep])
