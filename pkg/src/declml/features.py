"""Feature types and what each one can do.

The registry is the single table that ties a data type to its preprocessing
parameters, legal encoders and decoders (with their parameter schemas), loss
and metrics. Config compilation validates against it and model construction
dispatches on it.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from declml.errors import UnknownCapability, UnknownType


class FeatureType(str, enum.Enum):
    BINARY = "binary"
    NUMERIC = "numeric"
    CATEGORY = "category"
    SET = "set"
    TEXT = "text"
    VECTOR = "vector"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ParamSpec:
    """Schema of one scalar parameter: kind, default and legal range."""

    kind: str  # "int" | "float" | "str" | "bool"
    default: Any
    low: float | None = None
    high: float | None = None
    low_inclusive: bool = True
    high_inclusive: bool = True
    choices: tuple[Any, ...] | None = None
    nullable: bool = False

    def check(self, value: Any) -> tuple[Any, str | None]:
        """Return ``(normalized value, None)`` or ``(value, reason)``."""
        if value is None:
            return (None, None) if self.nullable else (value, "must not be null")
        if self.kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                return value, f"must be an integer, got {value!r}"
        elif self.kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                return value, f"must be a number, got {value!r}"
            value = float(value)
            if not math.isfinite(value):
                return value, f"must be finite, got {value!r}"
        elif self.kind == "str":
            if not isinstance(value, str):
                return value, f"must be a string, got {value!r}"
        elif self.kind == "bool":
            if not isinstance(value, bool):
                return value, f"must be a boolean, got {value!r}"
        if self.choices is not None and value not in self.choices:
            legal = ", ".join(str(c) for c in self.choices)
            return value, f"must be one of [{legal}], got {value!r}"
        if self.low is not None:
            if value < self.low or (value == self.low and not self.low_inclusive):
                op = ">=" if self.low_inclusive else ">"
                return value, f"must be {op} {self.low}, got {value!r}"
        if self.high is not None:
            if value > self.high or (value == self.high and not self.high_inclusive):
                op = "<=" if self.high_inclusive else "<"
                return value, f"must be {op} {self.high}, got {value!r}"
        if self.kind == "str" and not value:
            return value, "must be a non-empty string"
        return value, None


def _size(default: int) -> ParamSpec:
    return ParamSpec("int", default, low=1, high=65536)


_THRESHOLD = ParamSpec("float", 0.5, low=0.0, high=1.0, low_inclusive=False, high_inclusive=False)


@dataclass(frozen=True)
class ComponentInfo:
    """An encoder or decoder id together with its parameter schema."""

    id: str
    params: Mapping[str, ParamSpec] = field(default_factory=dict)
    description: str = ""


@dataclass(frozen=True)
class TypeCapabilities:
    type: FeatureType
    preprocessor: str
    preprocessing: Mapping[str, ParamSpec]
    encoders: Mapping[str, ComponentInfo]
    default_encoder: str
    decoders: Mapping[str, ComponentInfo]
    default_decoder: str | None
    loss: str | None
    metrics: tuple[str, ...]

    @property
    def can_be_output(self) -> bool:
        return bool(self.decoders)

    def describe(self) -> dict[str, Any]:
        def comp(c: ComponentInfo) -> dict[str, Any]:
            return {"params": {k: p.default for k, p in sorted(c.params.items())}, "description": c.description}

        return {
            "preprocessor": self.preprocessor,
            "preprocessing": {k: p.default for k, p in sorted(self.preprocessing.items())},
            "encoders": {k: comp(v) for k, v in sorted(self.encoders.items())},
            "default_encoder": self.default_encoder,
            "decoders": {k: comp(v) for k, v in sorted(self.decoders.items())},
            "default_decoder": self.default_decoder,
            "loss": self.loss,
            "metrics": list(self.metrics),
            "encoder_output": "rank-2 [batch, output_size]",
        }


class TypeRegistry:
    """Mapping from feature type to capabilities; frozen after construction."""

    def __init__(self, entries: Iterable[TypeCapabilities]):
        self._entries: dict[FeatureType, TypeCapabilities] = {}
        for cap in entries:
            if cap.default_encoder not in cap.encoders:
                raise ValueError(f"default encoder {cap.default_encoder!r} not legal for {cap.type}")
            if cap.decoders and cap.default_decoder not in cap.decoders:
                raise ValueError(f"default decoder {cap.default_decoder!r} not legal for {cap.type}")
            if cap.decoders and (cap.loss is None or not cap.metrics):
                raise ValueError(f"output type {cap.type} needs a loss and at least one metric")
            self._entries[cap.type] = cap

    def __contains__(self, name: object) -> bool:
        try:
            return FeatureType(name) in self._entries
        except ValueError:
            return False

    def types(self) -> list[FeatureType]:
        return list(self._entries)

    def capabilities_of(self, t: FeatureType | str, as_output: bool = False) -> TypeCapabilities:
        try:
            ft = FeatureType(t)
            cap = self._entries[ft]
        except (ValueError, KeyError):
            raise UnknownType(f"unknown feature type {t!r}; registered: {', '.join(sorted(map(str, self._entries)))}") from None
        if as_output and not cap.can_be_output:
            raise UnknownCapability(f"feature type {ft} cannot be used as an output")
        return cap

    def describe(self) -> dict[str, Any]:
        return {str(t): cap.describe() for t, cap in sorted(self._entries.items(), key=lambda kv: kv[0].value)}


def _builtin_entries() -> list[TypeCapabilities]:
    vocab = ParamSpec("int", 10000, low=1, high=10_000_000)
    return [
        TypeCapabilities(
            type=FeatureType.BINARY,
            preprocessor="binary_literal",
            preprocessing={},
            encoders={"passthrough": ComponentInfo("passthrough", {}, "the 0/1 value as a width-1 vector")},
            default_encoder="passthrough",
            decoders={"binary_classifier": ComponentInfo("binary_classifier", {"threshold": _THRESHOLD}, "one sigmoid logit")},
            default_decoder="binary_classifier",
            loss="binary_cross_entropy",
            metrics=("accuracy",),
        ),
        TypeCapabilities(
            type=FeatureType.NUMERIC,
            preprocessor="zscore",
            preprocessing={},
            encoders={
                "passthrough": ComponentInfo("passthrough", {}, "the z-scored value as a width-1 vector"),
                "dense": ComponentInfo("dense", {"output_size": _size(16)}, "affine projection of the z-scored value"),
            },
            default_encoder="passthrough",
            decoders={"regressor": ComponentInfo("regressor", {}, "one linear output in z-score space")},
            default_decoder="regressor",
            loss="mean_squared_error",
            metrics=("mse", "mae", "r2"),
        ),
        TypeCapabilities(
            type=FeatureType.CATEGORY,
            preprocessor="vocabulary",
            preprocessing={"vocab_size": vocab},
            encoders={
                "embedding": ComponentInfo("embedding", {"embedding_size": _size(32)}, "learned embedding row"),
                "onehot_dense": ComponentInfo("onehot_dense", {"output_size": _size(32)}, "one-hot vector through a dense layer"),
            },
            default_encoder="embedding",
            decoders={"classifier": ComponentInfo("classifier", {}, "softmax over the vocabulary")},
            default_decoder="classifier",
            loss="cross_entropy",
            metrics=("accuracy",),
        ),
        TypeCapabilities(
            type=FeatureType.SET,
            preprocessor="item_vocabulary",
            preprocessing={"vocab_size": vocab, "delimiter": ParamSpec("str", " ")},
            encoders={"multi_hot": ComponentInfo("multi_hot", {"output_size": _size(32)}, "multi-hot vector through a dense layer")},
            default_encoder="multi_hot",
            decoders={"multi_label": ComponentInfo("multi_label", {"threshold": _THRESHOLD}, "one sigmoid logit per item")},
            default_decoder="multi_label",
            loss="per_label_binary_cross_entropy",
            metrics=("jaccard", "micro_f1"),
        ),
        TypeCapabilities(
            type=FeatureType.TEXT,
            preprocessor="tokenizer",
            preprocessing={
                "vocab_size": vocab,
                "max_sequence_length": ParamSpec("int", None, low=1, high=65536, nullable=True),
            },
            encoders={
                "embed": ComponentInfo(
                    "embed",
                    {"embedding_size": _size(32), "output_size": _size(32)},
                    "token embeddings mean-pooled over non-padding positions, then a dense layer",
                ),
                "bow": ComponentInfo("bow", {"output_size": _size(32)}, "token counts through a dense layer"),
            },
            default_encoder="embed",
            decoders={},
            default_decoder=None,
            loss=None,
            metrics=(),
        ),
        TypeCapabilities(
            type=FeatureType.VECTOR,
            preprocessor="float_list",
            preprocessing={},
            encoders={"dense": ComponentInfo("dense", {"output_size": _size(32)}, "dense layer over the vector")},
            default_encoder="dense",
            decoders={},
            default_decoder=None,
            loss=None,
            metrics=(),
        ),
    ]


DEFAULT_REGISTRY = TypeRegistry(_builtin_entries())


def default_registry() -> TypeRegistry:
    return DEFAULT_REGISTRY


def capabilities_of(t: FeatureType | str, as_output: bool = False) -> TypeCapabilities:
    return DEFAULT_REGISTRY.capabilities_of(t, as_output=as_output)


_TASK_NAMES = {
    FeatureType.NUMERIC: "regression",
    FeatureType.BINARY: "binary classification",
    FeatureType.CATEGORY: "classification",
    FeatureType.SET: "multi-label classification",
}
_TASK_ORDER = [FeatureType.NUMERIC, FeatureType.BINARY, FeatureType.CATEGORY, FeatureType.SET]


def infer_task(inputs: Iterable[FeatureType | str], outputs: Iterable[FeatureType | str]) -> str:
    """Name the task solved by a model with these input and output types.

    A single output gives its task name, prefixed with ``text`` when any input
    is text. Several outputs give ``multi-task: a + b`` in a fixed type order,
    with ``(xN)`` marking repeated output types.
    """
    ins = {FeatureType(t) for t in inputs}
    outs = Counter(FeatureType(t) for t in outputs)
    if not ins or not outs:
        raise ValueError("infer_task needs at least one input and one output type")
    for t in outs:
        if t not in _TASK_NAMES:
            raise UnknownCapability(f"feature type {t} cannot be used as an output")
    if sum(outs.values()) == 1:
        (only,) = outs
        prefix = "text " if FeatureType.TEXT in ins else ""
        return prefix + _TASK_NAMES[only]
    parts = []
    for t in _TASK_ORDER:
        if outs[t]:
            parts.append(_TASK_NAMES[t] + (f" (x{outs[t]})" if outs[t] > 1 else ""))
    return "multi-task: " + " + ".join(parts)
