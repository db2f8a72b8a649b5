"""Fitted numeric normalizations and categoric encodings.

Bases are fitted on training data only and replayed unchanged on later data.
Statistics use the population convention (divide by N). Missing entries are
excluded from all statistics; numeric application imputes missing to 0 after
scaling (the missing marker carries the information), and categoric
vocabularies give missing its own entry for encoding while keeping a zero
frequency so it never participates in noise replacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .table import Cell, sort_cells

NUMERIC_KINDS = ("zscore", "minmax", "retain", "passthrough")
CATEGORIC_ENCODINGS = ("ordinal", "boolean", "onehot", "binarized", "passthrough")

UNKNOWN_CODE = 0  # reserved ordinal slot for values unseen in training


def column_as_floats(cells) -> tuple[np.ndarray, np.ndarray]:
    """(values, missing_mask); text and missing cells are masked, values 0-filled."""
    n = len(cells)
    values = np.zeros(n, dtype=np.float64)
    missing = np.zeros(n, dtype=bool)
    for i, cell in enumerate(cells):
        if isinstance(cell, float):
            values[i] = cell
        else:
            missing[i] = True
    return values, missing


@dataclass
class NumericBasis:
    mean: float = 0.0
    std: float = 0.0
    min: float = 0.0
    max: float = 0.0
    kind: str = "zscore"

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "min": self.min, "max": self.max, "kind": self.kind}

    @classmethod
    def from_dict(cls, data: dict) -> "NumericBasis":
        return cls(**data)


def fit_numeric(cells, kind: str) -> NumericBasis:
    if kind not in NUMERIC_KINDS:
        raise ValueError(f"unknown numeric kind: {kind!r}")
    values, missing = column_as_floats(cells)
    present = values[~missing]
    if len(present) == 0:
        return NumericBasis(kind=kind)
    mean = float(np.mean(present))
    std = float(np.sqrt(np.mean((present - mean) ** 2)))
    return NumericBasis(
        mean=mean,
        std=std,
        min=float(np.min(present)),
        max=float(np.max(present)),
        kind=kind,
    )


def apply_numeric(basis: NumericBasis, cells) -> tuple[np.ndarray, np.ndarray]:
    """Scale a column on the fitted basis; returns (floats, missing_mask).

    zscore: (x - mean) / std, constant 0 when std is 0. minmax and retain:
    (x - min) / (max - min) clipped to [0, 1], constant 0.5 when degenerate.
    Missing entries come out as 0 after scaling.
    """
    values, missing = column_as_floats(cells)
    if basis.kind == "zscore":
        if basis.std > 0.0:
            out = (values - basis.mean) / basis.std
        else:
            out = np.zeros_like(values)
    elif basis.kind in ("minmax", "retain"):
        span = basis.max - basis.min
        if span > 0.0:
            out = np.clip((values - basis.min) / span, 0.0, 1.0)
        else:
            out = np.full_like(values, 0.5)
    elif basis.kind == "passthrough":
        out = values.copy()
    else:
        raise ValueError(f"unknown numeric kind: {basis.kind!r}")
    out[missing] = 0.0
    return out, missing


@dataclass
class CategoricBasis:
    """Training vocabulary with frequencies.

    ``vocabulary`` holds the unique non-missing training values in
    deterministic order (numbers ascending, then text lexicographic).
    Ordinal codes are shifted by one: code 0 is the unknown slot for values
    unseen in training. When the training column contained missing entries,
    ``missing_code`` is the extra code len(vocabulary)+1.
    """

    vocabulary: list = field(default_factory=list)
    frequencies: list = field(default_factory=list)
    encoding: str = "ordinal"
    missing_code: int | None = None

    @property
    def code_count(self) -> int:
        """Number of distinct codes including the unknown slot."""
        return len(self.vocabulary) + 1 + (1 if self.missing_code is not None else 0)

    def code_of(self, cell: Cell) -> int:
        if cell is None:
            return self.missing_code if self.missing_code is not None else UNKNOWN_CODE
        try:
            return self._index[cell] + 1
        except KeyError:
            return UNKNOWN_CODE

    def value_of(self, code: int) -> Cell:
        if 1 <= code <= len(self.vocabulary):
            return self.vocabulary[code - 1]
        if self.missing_code is not None and code == self.missing_code:
            return None
        return None

    def __post_init__(self):
        self._index = {value: i for i, value in enumerate(self.vocabulary)}

    def to_dict(self) -> dict:
        return {
            "vocabulary": list(self.vocabulary),
            "frequencies": list(self.frequencies),
            "encoding": self.encoding,
            "missing_code": self.missing_code,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CategoricBasis":
        return cls(
            vocabulary=list(data["vocabulary"]),
            frequencies=list(data["frequencies"]),
            encoding=data["encoding"],
            missing_code=data["missing_code"],
        )


def fit_categoric(cells, encoding: str = "ordinal") -> CategoricBasis:
    if encoding not in CATEGORIC_ENCODINGS:
        raise ValueError(f"unknown categoric encoding: {encoding!r}")
    counts: dict = {}
    saw_missing = False
    for cell in cells:
        if cell is None:
            saw_missing = True
            continue
        counts[cell] = counts.get(cell, 0) + 1
    vocabulary = sort_cells(counts)
    frequencies = [counts[v] for v in vocabulary]
    missing_code = len(vocabulary) + 1 if saw_missing else None
    return CategoricBasis(
        vocabulary=vocabulary,
        frequencies=frequencies,
        encoding=encoding,
        missing_code=missing_code,
    )


def ordinal_codes(basis: CategoricBasis, cells) -> np.ndarray:
    return np.array([basis.code_of(c) for c in cells], dtype=np.int64)


def binarized_width(basis: CategoricBasis) -> int:
    return max(1, math.ceil(math.log2(max(2, basis.code_count))))


def codes_to_bits(basis: CategoricBasis, codes: np.ndarray) -> np.ndarray:
    """(n, width) 0/1 matrix; row bits are the binary representation of the code."""
    width = binarized_width(basis)
    out = np.zeros((len(codes), width), dtype=np.int64)
    for bit in range(width):
        out[:, bit] = (codes >> (width - 1 - bit)) & 1
    return out


def bits_to_codes(basis: CategoricBasis, bits: np.ndarray) -> np.ndarray:
    width = bits.shape[1]
    codes = np.zeros(len(bits), dtype=np.int64)
    for bit in range(width):
        codes = (codes << 1) | bits[:, bit].astype(np.int64)
    return codes


def codes_to_onehot(basis: CategoricBasis, codes: np.ndarray) -> np.ndarray:
    """(n, |vocab| [+1 for missing]) activations; unknown rows are all zero."""
    width = basis.code_count - 1  # one column per real code, none for unknown
    out = np.zeros((len(codes), width), dtype=np.int64)
    for i, code in enumerate(codes):
        if code >= 1:
            out[i, code - 1] = 1
    return out


def onehot_to_codes(basis: CategoricBasis, columns: np.ndarray) -> np.ndarray:
    codes = np.zeros(len(columns), dtype=np.int64)
    hits = np.argmax(columns, axis=1)
    any_active = columns.max(axis=1) > 0
    codes[any_active] = hits[any_active] + 1
    return codes


def boolean_codes(basis: CategoricBasis, cells) -> np.ndarray:
    """Single 0/1 column for a two-value vocabulary.

    Missing and unseen values map to the more frequent training value's code
    (ties to code 0) since a boolean column has no spare slot.
    """
    if len(basis.vocabulary) > 2:
        raise ValueError("boolean encoding requires at most 2 training values")
    fallback = 0
    if len(basis.frequencies) == 2 and basis.frequencies[1] > basis.frequencies[0]:
        fallback = 1
    out = np.empty(len(cells), dtype=np.int64)
    for i, cell in enumerate(cells):
        if cell is None:
            out[i] = fallback
        else:
            code = basis.code_of(cell)
            out[i] = code - 1 if code >= 1 and code != basis.missing_code else fallback
    return out


def apply_categoric(basis: CategoricBasis, cells) -> list[np.ndarray]:
    """Encode a column on the fitted basis; returns one array per output column."""
    if basis.encoding == "boolean":
        return [boolean_codes(basis, cells)]
    codes = ordinal_codes(basis, cells)
    if basis.encoding == "ordinal":
        return [codes]
    if basis.encoding == "onehot":
        grid = codes_to_onehot(basis, codes)
        return [grid[:, j].copy() for j in range(grid.shape[1])]
    if basis.encoding == "binarized":
        grid = codes_to_bits(basis, codes)
        return [grid[:, j].copy() for j in range(grid.shape[1])]
    raise ValueError(f"unsupported encoding: {basis.encoding!r}")


def narw_marker(cells) -> np.ndarray:
    """0/1 missing-data marker aligned with the input rows."""
    return np.array([1 if cell is None else 0 for cell in cells], dtype=np.int64)
