"""Raw tabular data and deterministic train/validation/test splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from declml.errors import BadRatios, BadSplitLabel, MalformedRow, MissingColumn, MissingFile

SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class ColumnarDataset:
    """Named columns of raw string cells, all of equal length."""

    columns: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have unequal lengths: {sorted(lengths)}")

    @classmethod
    def from_rows(cls, rows: Sequence[Mapping[str, object]], columns: Sequence[str] | None = None) -> "ColumnarDataset":
        if columns is None:
            columns = list(rows[0].keys()) if rows else []
        out = {}
        for c in columns:
            try:
                out[c] = tuple("" if r[c] is None else str(r[c]) for r in rows)
            except KeyError:
                raise MissingColumn(c) from None
        return cls(out)

    @property
    def column_names(self) -> list[str]:
        return list(self.columns)

    @property
    def row_count(self) -> int:
        for v in self.columns.values():
            return len(v)
        return 0

    def __len__(self) -> int:
        return self.row_count

    def column(self, name: str) -> tuple[str, ...]:
        try:
            return self.columns[name]
        except KeyError:
            raise MissingColumn(name) from None

    def take(self, indices: Iterable[int]) -> "ColumnarDataset":
        idx = list(indices)
        return ColumnarDataset({k: tuple(v[i] for i in idx) for k, v in self.columns.items()})

    def require(self, names: Iterable[str]) -> None:
        for n in names:
            if n not in self.columns:
                raise MissingColumn(n)


def ingest_table(
    path: str | Path,
    config=None,
    delimiter: str = ",",
    require_outputs: bool = True,
) -> ColumnarDataset:
    """Read a header-first delimited file; every cell is kept as a string.

    With ``config``, every input feature column (and output column when
    ``require_outputs``) must be present.
    """
    p = Path(path)
    try:
        fh = p.open(newline="", encoding="utf-8")
    except FileNotFoundError:
        raise MissingFile(f"data file not found: {p}") from None
    with fh:
        reader = csv.reader(fh, delimiter=delimiter, strict=True)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(1, "missing header row") from None
        except csv.Error as exc:
            raise MalformedRow(1, str(exc)) from None
        if len(set(header)) != len(header):
            raise MalformedRow(1, "duplicate column names in header")
        cols: list[list[str]] = [[] for _ in header]
        try:
            for row in reader:
                if not row:
                    continue  # blank line
                if len(row) != len(header):
                    raise MalformedRow(reader.line_num, f"expected {len(header)} fields, got {len(row)}")
                for c, cell in zip(cols, row):
                    c.append(cell)
        except csv.Error as exc:
            raise MalformedRow(reader.line_num, str(exc)) from None
    ds = ColumnarDataset({h: tuple(c) for h, c in zip(header, cols)})
    if config is not None:
        ds.require(f.name for f in config.input_features)
        if require_outputs:
            ds.require(f.name for f in config.output_features)
    return ds


@dataclass(frozen=True)
class SplitAssignment:
    labels: tuple[str, ...]

    def indices(self, split: str) -> list[int]:
        return [i for i, s in enumerate(self.labels) if s == split]

    def counts(self) -> dict[str, int]:
        return {s: self.labels.count(s) for s in SPLITS}


def _apportion(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder rounding: each count is within 1 of ``n * ratio``."""
    exact = [n * r for r in ratios]
    counts = [int(np.floor(x)) for x in exact]
    left = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def assign_splits(
    ds: ColumnarDataset,
    ratios: Sequence[float] = (0.7, 0.1, 0.2),
    seed: int = 42,
    split_column: str | None = None,
) -> SplitAssignment:
    """Label every row train/validation/test.

    An explicit ``split_column`` wins over ratios and seed. Otherwise rows are
    dealt out along a seeded permutation in the proportions given.
    """
    if split_column is not None:
        labels = ds.column(split_column)
        for i, lab in enumerate(labels):
            if lab not in SPLITS:
                raise BadSplitLabel(f"row {i + 1}: split label {lab!r} not in {SPLITS}")
        return SplitAssignment(tuple(labels))
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"split ratios must be three positive numbers summing to 1, got {ratios}")
    n = ds.row_count
    counts = _apportion(n, ratios)
    perm = np.random.default_rng(seed).permutation(n)
    labels = [""] * n
    start = 0
    for name, k in zip(SPLITS, counts):
        for i in perm[start : start + k]:
            labels[int(i)] = name
        start += k
    return SplitAssignment(tuple(labels))
