"""Raw cells -> arrays, and model outputs -> raw-space predictions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

from declml.data.dataset import ColumnarDataset
from declml.data.metadata import (
    BinaryMetadata,
    CategoryMetadata,
    FeatureMetadata,
    NumericMetadata,
    SetMetadata,
    TextMetadata,
    VectorMetadata,
    parse_number,
    split_items,
    tokenize,
)
from declml.errors import BadBinaryLiteral, BadVectorLength, ShapeMismatch

UNK_INDEX = 0
TEXT_UNK_INDEX = 1


def encode_column(cells: Sequence[str], meta: FeatureMetadata, name: str = "<feature>") -> np.ndarray:
    """Encode one column.

    Shapes: category ``(n,)`` int64; text ``(n, max_sequence_length)`` int64;
    set ``(n, K)`` multi-hot; numeric/binary ``(n, 1)``; vector ``(n, dim)``.
    Floating outputs are float64 here and cast to the tensor dtype later.
    """
    n = len(cells)
    if isinstance(meta, CategoryMetadata):
        idx = meta.index
        return np.fromiter((idx.get(c, UNK_INDEX) for c in cells), dtype=np.int64, count=n)
    if isinstance(meta, TextMetadata):
        L = meta.max_sequence_length
        out = np.zeros((n, L), dtype=np.int64)
        idx = meta.index
        for r, cell in enumerate(cells):
            toks = tokenize(cell)[:L]
            out[r, : len(toks)] = [idx.get(t, TEXT_UNK_INDEX) for t in toks]
        return out
    if isinstance(meta, SetMetadata):
        out = np.zeros((n, meta.size), dtype=np.float64)
        idx = meta.index
        for r, cell in enumerate(cells):
            for item in split_items(cell, meta.delimiter):
                j = idx.get(item)
                if j is not None:
                    out[r, j] = 1.0
        return out
    if isinstance(meta, NumericMetadata):
        vals = [parse_number(c) for c in cells]
        raw = np.array([meta.fill_value if v is None else v for v in vals], dtype=np.float64)
        return ((raw - meta.mean) / meta.std).reshape(n, 1)
    if isinstance(meta, BinaryMetadata):
        out = np.zeros((n, 1), dtype=np.float64)
        trues, falses = set(meta.true_literals), set(meta.false_literals)
        for r, cell in enumerate(cells):
            lit = cell.strip().lower()
            if lit in trues:
                out[r, 0] = 1.0
            elif lit not in falses:
                raise BadBinaryLiteral(f"{name}: row {r + 1}: {cell!r} is not a binary literal")
        return out
    if isinstance(meta, VectorMetadata):
        out = np.zeros((n, meta.dim), dtype=np.float64)
        for r, cell in enumerate(cells):
            parts = cell.split()
            if len(parts) != meta.dim:
                raise BadVectorLength(f"{name}: row {r + 1}: expected {meta.dim} values, got {len(parts)}")
            try:
                out[r] = [float(p) for p in parts]
            except ValueError:
                raise BadVectorLength(f"{name}: row {r + 1}: non-numeric vector entry") from None
        return out
    raise TypeError(f"unsupported metadata {type(meta).__name__}")


@dataclass(frozen=True)
class TensorBatch:
    inputs: Mapping[str, np.ndarray]
    targets: Mapping[str, np.ndarray]
    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class EncodedDataset:
    """Column arrays for every input (and, when labeled, output) feature."""

    inputs: Mapping[str, np.ndarray]
    targets: Mapping[str, np.ndarray]
    row_count: int

    def __len__(self) -> int:
        return self.row_count

    def subset(self, indices: Sequence[int]) -> "EncodedDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return EncodedDataset(
            {k: v[idx] for k, v in self.inputs.items()},
            {k: v[idx] for k, v in self.targets.items()},
            len(idx),
        )

    def batch(self, indices: Sequence[int] | None = None) -> TensorBatch:
        if indices is None:
            indices = np.arange(self.row_count)
        idx = np.asarray(indices, dtype=np.int64)
        return TensorBatch(
            {k: v[idx] for k, v in self.inputs.items()},
            {k: v[idx] for k, v in self.targets.items()},
            idx,
        )

    def batches(self, batch_size: int, rng: np.random.Generator | None = None) -> Iterator[TensorBatch]:
        """Consecutive batches, in a fresh ``rng`` permutation when given.

        The last partial batch is kept.
        """
        order = np.arange(self.row_count) if rng is None else rng.permutation(self.row_count)
        for start in range(0, self.row_count, batch_size):
            yield self.batch(order[start : start + batch_size])


def encode_dataset(
    ds: ColumnarDataset, meta: Mapping[str, FeatureMetadata], config, with_targets: bool = True
) -> EncodedDataset:
    """Encode every input feature and (optionally) every output target.

    Numeric targets are z-scored with their own metadata, like numeric inputs.
    """
    inputs = {f.name: encode_column(ds.column(f.name), meta[f.name], f.name) for f in config.input_features}
    targets = {}
    if with_targets:
        targets = {f.name: encode_column(ds.column(f.name), meta[f.name], f.name) for f in config.output_features}
    return EncodedDataset(inputs, targets, ds.row_count)


def decode_column(values: np.ndarray, meta: FeatureMetadata, threshold: float = 0.5) -> list[Any]:
    """Map one output's probabilities (or z-space regressions) to raw values.

    category: label via argmax; set: item list in vocabulary order for every
    probability >= threshold; numeric: de-z-scored float; binary: bool.
    """
    v = np.asarray(values)
    if isinstance(meta, CategoryMetadata):
        if v.ndim != 2 or v.shape[1] != meta.size:
            raise ShapeMismatch(f"category probabilities must be (n, {meta.size}), got {v.shape}")
        return [meta.vocab[int(i)] for i in np.argmax(v, axis=1)]
    if isinstance(meta, SetMetadata):
        if v.ndim != 2 or v.shape[1] != meta.size:
            raise ShapeMismatch(f"set probabilities must be (n, {meta.size}), got {v.shape}")
        return [[meta.vocab[j] for j in np.flatnonzero(row >= threshold)] for row in v]
    if isinstance(meta, NumericMetadata):
        if v.ndim != 2 or v.shape[1] != 1:
            raise ShapeMismatch(f"numeric predictions must be (n, 1), got {v.shape}")
        return [float(x) * meta.std + meta.mean for x in v[:, 0].astype(np.float64)]
    if isinstance(meta, BinaryMetadata):
        if v.ndim != 2 or v.shape[1] != 1:
            raise ShapeMismatch(f"binary probabilities must be (n, 1), got {v.shape}")
        return [bool(x >= threshold) for x in v[:, 0]]
    raise TypeError(f"{type(meta).__name__} cannot be decoded as an output")


def decode_predictions(
    outputs: Mapping[str, np.ndarray], meta: Mapping[str, FeatureMetadata], thresholds: Mapping[str, float] | None = None
) -> dict[str, list[Any]]:
    thresholds = thresholds or {}
    return {name: decode_column(v, meta[name], thresholds.get(name, 0.5)) for name, v in outputs.items()}
