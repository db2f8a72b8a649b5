"""Tidy tabular container with typed cells, kind inference, and suffix naming.

Cells are one of: finite 64-bit float, text string, or missing (``None``).
Typing happens at ingestion: a field that parses as a finite float becomes a
number, empty fields (or configured sentinels) become missing, everything
else stays text. Tables are immutable after construction and safe to share;
transforms always build new columns.
"""

from __future__ import annotations

import csv
import math
from enum import Enum
from typing import Iterable, Sequence

from .errors import TableError

Cell = object  # float | str | None

DEFAULT_MISSING_SENTINELS = ("",)


class FeatureKind(str, Enum):
    NUMERIC = "numeric"
    BOOLEAN_CATEGORIC = "boolean_categoric"
    CATEGORIC = "categoric"
    PASSTHROUGH = "passthrough"


def parse_cell(text: str, missing_sentinels: Sequence[str] = DEFAULT_MISSING_SENTINELS) -> Cell:
    """Type a raw CSV field: sentinel -> missing, finite float -> number, else text."""
    if text in missing_sentinels:
        return None
    try:
        value = float(text)
    except ValueError:
        return text
    # Numbers are finite 64-bit floats; 'nan'/'inf' spellings stay text so they
    # cannot poison fitted statistics.
    if math.isfinite(value):
        return value
    return text


def format_cell(cell: Cell) -> str:
    if cell is None:
        return ""
    if isinstance(cell, float):
        if cell.is_integer() and abs(cell) < 1e16:
            return str(int(cell))
        return repr(cell)
    return str(cell)


def _normalize_cell(value: Cell) -> Cell:
    if value is None or isinstance(value, str):
        return value
    if isinstance(value, bool):
        return 1.0 if value else 0.0
    if isinstance(value, int):
        return float(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise TableError("non-finite numbers are not valid cells; use missing instead")
        return value
    raise TableError(f"unsupported cell type: {type(value).__name__}")


class DataTable:
    """Ordered named columns of equal length plus stable integer row identifiers."""

    __slots__ = ("column_names", "_columns", "row_index")

    def __init__(self, columns: dict[str, Sequence[Cell]], row_index: Sequence[int] | None = None):
        names = list(columns)
        if len(set(names)) != len(names):
            raise TableError("duplicate column names")
        data: dict[str, list[Cell]] = {}
        n_rows = None
        for name in names:
            col = [_normalize_cell(v) for v in columns[name]]
            if n_rows is None:
                n_rows = len(col)
            elif len(col) != n_rows:
                raise TableError(
                    f"column {name!r} has {len(col)} rows, expected {n_rows}"
                )
            data[name] = col
        if n_rows is None:
            n_rows = 0
        if row_index is None:
            row_index = range(n_rows)
        index = [int(i) for i in row_index]
        if len(index) != n_rows:
            raise TableError("row_index length does not match column length")
        self.column_names = names
        self._columns = data
        self.row_index = index

    @property
    def n_rows(self) -> int:
        return len(self.row_index)

    def column(self, name: str) -> list[Cell]:
        return self._columns[name]

    def has_column(self, name: str) -> bool:
        return name in self._columns

    def take(self, rows: Sequence[int]) -> "DataTable":
        """New table with the given positional rows, preserving row_index values."""
        cols = {name: [self._columns[name][i] for i in rows] for name in self.column_names}
        return DataTable(cols, row_index=[self.row_index[i] for i in rows])

    def equals(self, other: "DataTable") -> bool:
        return (
            self.column_names == other.column_names
            and self.row_index == other.row_index
            and all(self._columns[n] == other._columns[n] for n in self.column_names)
        )

    def __repr__(self) -> str:
        return f"DataTable({len(self.column_names)} columns x {self.n_rows} rows)"


def load_csv(
    path,
    delimiter: str = ",",
    header: bool = True,
    missing_sentinels: Sequence[str] = DEFAULT_MISSING_SENTINELS,
) -> DataTable:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle, delimiter=delimiter)
        rows = list(reader)
    if not rows:
        raise TableError(f"{path}: empty file (no header row)")
    if header:
        names = rows[0]
        body = rows[1:]
    else:
        names = [f"c{i}" for i in range(len(rows[0]))]
        body = rows
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise TableError(f"{path}: duplicate headers: {', '.join(dupes)}")
    width = len(names)
    columns: dict[str, list[Cell]] = {name: [] for name in names}
    for number, row in enumerate(body, start=2 if header else 1):
        if len(row) != width:
            raise TableError(
                f"{path}: row {number} has {len(row)} fields, expected {width}"
            )
        for name, field in zip(names, row):
            columns[name].append(parse_cell(field, missing_sentinels))
    return DataTable(columns)


def write_csv(table: DataTable, path, delimiter: str = ",", include_row_index: bool = False) -> None:
    """Write RFC-4180-style CSV; missing cells become empty fields."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter=delimiter)
        names = table.column_names
        if include_row_index:
            writer.writerow(["row_index"] + names)
        else:
            writer.writerow(names)
        cols = [table.column(n) for n in names]
        for i in range(table.n_rows):
            row = [format_cell(col[i]) for col in cols]
            if include_row_index:
                row = [str(table.row_index[i])] + row
            writer.writerow(row)


def infer_feature_kind(column: Iterable[Cell]) -> FeatureKind:
    """Kind from the multiset of non-missing values.

    All-numeric columns are numeric; otherwise a column with exactly two
    unique values is boolean; everything else (including all-missing) is
    categoric.
    """
    seen: set = set()
    all_numeric = True
    any_present = False
    for value in column:
        if value is None:
            continue
        any_present = True
        seen.add(value)
        if not isinstance(value, float):
            all_numeric = False
    if not any_present:
        return FeatureKind.CATEGORIC
    if all_numeric:
        return FeatureKind.NUMERIC
    if len(seen) == 2:
        return FeatureKind.BOOLEAN_CATEGORIC
    return FeatureKind.CATEGORIC


def suffixed_name(base: str, category: str, existing: Iterable[str] = ()) -> str:
    """``base + '_' + category``; collisions with existing names get ``_1``, ``_2``, ..."""
    name = f"{base}_{category}"
    taken = set(existing)
    if name not in taken:
        return name
    counter = 1
    while f"{name}_{counter}" in taken:
        counter += 1
    return f"{name}_{counter}"


def sort_cells(values: Iterable[Cell]) -> list[Cell]:
    """Deterministic cell ordering: numbers first (ascending), then text."""
    return sorted(values, key=lambda v: (1, v) if isinstance(v, str) else (0, v))
