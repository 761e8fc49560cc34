"""Per-feature state fitted on the training split."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Any, Iterable, Mapping, Union

import numpy as np

from declml.data.dataset import ColumnarDataset
from declml.errors import AllMissingColumn, BadVectorLength, EmptyTrainSplit
from declml.features import FeatureType

UNK = "<UNK>"
PAD = "<PAD>"
MAX_AUTO_SEQUENCE_LENGTH = 256
TRUE_LITERALS = ("1", "t", "true", "yes")
FALSE_LITERALS = ("0", "f", "false", "no")

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, then split on maximal runs of non-alphanumeric characters."""
    return _TOKEN.findall(text.lower())


def split_items(cell: str, delimiter: str) -> list[str]:
    return [item.strip() for item in cell.split(delimiter) if item.strip()]


def parse_number(cell: str) -> float | None:
    """Float value of a cell, or None when missing/unparseable/non-finite."""
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def ranked_vocabulary(counts: Counter, cap: int) -> list[str]:
    """Most frequent first, ties broken lexicographically, at most ``cap`` entries."""
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [k for k, _ in ranked[:cap]]


@dataclass(frozen=True)
class _VocabMixin:
    vocab: tuple[str, ...]

    @cached_property
    def index(self) -> dict[str, int]:
        return {tok: i for i, tok in enumerate(self.vocab)}

    @property
    def size(self) -> int:
        return len(self.vocab)


@dataclass(frozen=True)
class CategoryMetadata(_VocabMixin):
    """Index 0 is the unknown-value token."""

    type: str = field(default="category", init=False)


@dataclass(frozen=True)
class TextMetadata(_VocabMixin):
    """Index 0 pads, index 1 is the unknown token."""

    max_sequence_length: int = 1
    vocab_size: int = 10000
    type: str = field(default="text", init=False)


@dataclass(frozen=True)
class SetMetadata(_VocabMixin):
    delimiter: str = " "
    type: str = field(default="set", init=False)


@dataclass(frozen=True)
class NumericMetadata:
    mean: float
    std: float
    fill_value: float
    type: str = field(default="numeric", init=False)


@dataclass(frozen=True)
class BinaryMetadata:
    true_literals: tuple[str, ...] = TRUE_LITERALS
    false_literals: tuple[str, ...] = FALSE_LITERALS
    type: str = field(default="binary", init=False)


@dataclass(frozen=True)
class VectorMetadata:
    dim: int
    type: str = field(default="vector", init=False)


FeatureMetadata = Union[CategoryMetadata, TextMetadata, SetMetadata, NumericMetadata, BinaryMetadata, VectorMetadata]

_CLASSES = {
    "category": CategoryMetadata,
    "text": TextMetadata,
    "set": SetMetadata,
    "numeric": NumericMetadata,
    "binary": BinaryMetadata,
    "vector": VectorMetadata,
}


def metadata_to_dict(meta: FeatureMetadata) -> dict[str, Any]:
    d = asdict(meta)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def metadata_from_dict(d: Mapping[str, Any]) -> FeatureMetadata:
    d = dict(d)
    cls = _CLASSES[d.pop("type")]
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def _fit_one(ftype: FeatureType, cells: tuple[str, ...], pre: Mapping[str, Any], name: str) -> FeatureMetadata:
    if ftype is FeatureType.CATEGORY:
        counts = Counter(c for c in cells if c != UNK)
        return CategoryMetadata((UNK, *ranked_vocabulary(counts, pre["vocab_size"])))
    if ftype is FeatureType.TEXT:
        token_lists = [tokenize(c) for c in cells]
        counts = Counter(t for toks in token_lists for t in toks)
        vocab = (PAD, UNK, *ranked_vocabulary(counts, pre["vocab_size"]))
        max_len = pre.get("max_sequence_length")
        if max_len is None:
            p99 = float(np.percentile([len(t) for t in token_lists], 99))
            max_len = min(max(int(math.ceil(p99)), 1), MAX_AUTO_SEQUENCE_LENGTH)
        return TextMetadata(vocab, max_sequence_length=max_len, vocab_size=pre["vocab_size"])
    if ftype is FeatureType.SET:
        delim = pre["delimiter"]
        counts = Counter(item for c in cells for item in split_items(c, delim))
        return SetMetadata(tuple(ranked_vocabulary(counts, pre["vocab_size"])), delimiter=delim)
    if ftype is FeatureType.NUMERIC:
        values = [v for v in (parse_number(c) for c in cells) if v is not None]
        if not values:
            raise AllMissingColumn(name)
        arr = np.asarray(values, dtype=np.float64)
        mean = float(arr.mean())
        std = float(arr.std())
        return NumericMetadata(mean=mean, std=std if std > 0 else 1.0, fill_value=mean)
    if ftype is FeatureType.BINARY:
        return BinaryMetadata()
    if ftype is FeatureType.VECTOR:
        for c in cells:
            if c.strip():
                return VectorMetadata(len(c.split()))
        raise BadVectorLength(f"vector feature {name!r} has no non-empty training value")
    raise AssertionError(ftype)


def fit_metadata(train: ColumnarDataset, config) -> dict[str, FeatureMetadata]:
    """Fit vocabularies and statistics from training rows only."""
    if train.row_count == 0:
        raise EmptyTrainSplit("training split has no rows")
    return {f.name: _fit_one(f.type, train.column(f.name), f.preprocessing, f.name) for f in config.features}


def fit_feature(ftype: FeatureType | str, cells: Iterable[str], **preprocessing) -> FeatureMetadata:
    """Fit one feature outside a full config (defaults from the type registry)."""
    from declml.features import capabilities_of

    ftype = FeatureType(ftype)
    pre = {k: p.default for k, p in capabilities_of(ftype).preprocessing.items()}
    pre.update(preprocessing)
    cells = tuple(cells)
    if not cells:
        raise EmptyTrainSplit("no training values")
    return _fit_one(ftype, cells, pre, "<feature>")
