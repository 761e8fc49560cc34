"""Compiled configuration values and the raw-tree -> PipelineConfig compiler."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

from declml.errors import InvalidGoalMetric, UnknownCapability, UnknownType, ValidationError
from declml.features import DEFAULT_REGISTRY, FeatureType, ParamSpec, TypeRegistry


@dataclass(frozen=True)
class ComponentSpec:
    """A chosen encoder or decoder and its fully resolved parameters."""

    name: str
    params: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, **self.params}


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    type: FeatureType
    encoder: ComponentSpec | None = None
    decoder: ComponentSpec | None = None
    preprocessing: dict[str, Any] = field(default_factory=dict)
    loss_weight: float | None = None

    @property
    def is_output(self) -> bool:
        return self.decoder is not None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"name": self.name, "type": self.type.value, "preprocessing": dict(self.preprocessing)}
        if self.encoder is not None:
            d["encoder"] = self.encoder.to_dict()
        if self.decoder is not None:
            d["decoder"] = self.decoder.to_dict()
            d["loss_weight"] = self.loss_weight
        return d


@dataclass(frozen=True)
class CombinerSpec:
    type: str = "concat"
    num_fc_layers: int = 1
    fc_size: int = 64
    activation: str = "relu"

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class TrainingSpec:
    optimizer: str = "adam"
    learning_rate: float = 0.001
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 20
    batch_size: int = 32
    early_stop: int = 5
    seed: int = 42

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.7
    validation: float = 0.1
    test: float = 0.2
    column: str | None = None

    @property
    def ratios(self) -> tuple[float, float, float]:
        return (self.train, self.validation, self.test)

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class PreprocessingSpec:
    split: SplitSpec = field(default_factory=SplitSpec)
    # per-type defaults inherited by features that do not override them
    types: dict[str, dict[str, Any]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"split": self.split.to_dict()}
        d.update({t: dict(v) for t, v in self.types.items()})
        return d


@dataclass(frozen=True)
class SearchDomain:
    """One searched config path: a value list or an int/float range."""

    path: str
    type: str  # "choice" | "int" | "float"
    values: tuple[Any, ...] | None = None
    low: float | None = None
    high: float | None = None
    scale: str | None = None  # "linear" | "log" for float ranges

    @property
    def finite(self) -> bool:
        return self.type in ("choice", "int")

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"path": self.path, "type": self.type}
        if self.type == "choice":
            d["values"] = list(self.values)
        else:
            d["low"], d["high"] = self.low, self.high
            if self.type == "float":
                d["scale"] = self.scale
        return d


@dataclass(frozen=True)
class SearchSpace:
    domains: tuple[SearchDomain, ...]

    @property
    def paths(self) -> list[str]:
        return [d.path for d in self.domains]


@dataclass(frozen=True)
class GoalSpec:
    output_feature: str
    metric: str
    direction: str

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class HyperoptSpec:
    strategy: str
    samples: int
    seed: int
    split: str
    goal: GoalSpec
    parameters: tuple[SearchDomain, ...]

    @property
    def space(self) -> SearchSpace:
        return SearchSpace(self.parameters)

    def to_dict(self) -> dict[str, Any]:
        return {
            "strategy": self.strategy,
            "samples": self.samples,
            "seed": self.seed,
            "split": self.split,
            "goal": self.goal.to_dict(),
            "parameters": [p.to_dict() for p in self.parameters],
        }


@dataclass(frozen=True)
class PipelineConfig:
    input_features: tuple[FeatureSpec, ...]
    output_features: tuple[FeatureSpec, ...]
    combiner: CombinerSpec
    training: TrainingSpec
    preprocessing: PreprocessingSpec
    hyperopt: HyperoptSpec | None = None

    @property
    def features(self) -> tuple[FeatureSpec, ...]:
        return self.input_features + self.output_features

    def feature(self, name: str) -> FeatureSpec:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        d = {
            "input_features": [f.to_dict() for f in self.input_features],
            "output_features": [f.to_dict() for f in self.output_features],
            "combiner": self.combiner.to_dict(),
            "training": self.training.to_dict(),
            "preprocessing": self.preprocessing.to_dict(),
        }
        if self.hyperopt is not None:
            d["hyperopt"] = self.hyperopt.to_dict()
        return d

    def fingerprint(self) -> str:
        """sha256 of the canonical rendering."""
        from declml.config.document import render_tree

        return hashlib.sha256(render_tree(self.to_dict()).encode("utf-8")).hexdigest()


# --- compiler ----------------------------------------------------------------

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

COMBINER_SCHEMA = {
    "type": ParamSpec("str", "concat", choices=("concat",)),
    "num_fc_layers": ParamSpec("int", 1, low=0, high=64),
    "fc_size": ParamSpec("int", 64, low=1, high=65536),
    "activation": ParamSpec("str", "relu", choices=("relu", "tanh", "sigmoid", "linear")),
}
_UNIT_OPEN = dict(low=0.0, high=1.0, high_inclusive=False)
TRAINING_SCHEMA = {
    "optimizer": ParamSpec("str", "adam", choices=("adam", "sgd")),
    "learning_rate": ParamSpec("float", 0.001, low=0.0, low_inclusive=False),
    "momentum": ParamSpec("float", 0.0, **_UNIT_OPEN),
    "beta1": ParamSpec("float", 0.9, **_UNIT_OPEN),
    "beta2": ParamSpec("float", 0.999, **_UNIT_OPEN),
    "epsilon": ParamSpec("float", 1e-8, low=0.0, low_inclusive=False),
    "epochs": ParamSpec("int", 20, low=1, high=1_000_000),
    "batch_size": ParamSpec("int", 32, low=1, high=10_000_000),
    "early_stop": ParamSpec("int", 5, low=0),
    "seed": ParamSpec("int", 42, low=0, high=2**32 - 1),
}
SPLIT_SCHEMA = {
    "train": ParamSpec("float", 0.7, low=0.0, high=1.0, low_inclusive=False),
    "validation": ParamSpec("float", 0.1, low=0.0, high=1.0, low_inclusive=False),
    "test": ParamSpec("float", 0.2, low=0.0, high=1.0, low_inclusive=False),
    "column": ParamSpec("str", None, nullable=True),
}
_TOP_LEVEL = ("input_features", "output_features", "combiner", "training", "preprocessing", "hyperopt")
_MINIMIZED = {"loss", "mse", "mae"}


def _mapping(raw: Any, path: str) -> Mapping:
    if raw is None:
        return {}
    if not isinstance(raw, Mapping):
        raise ValidationError(path, f"must be a mapping, got {type(raw).__name__}")
    return raw


def _unknown(raw: Mapping, path: str, legal) -> None:
    for key in raw:
        if key not in legal:
            listed = ", ".join(sorted(legal)) or "none"
            raise ValidationError(f"{path}.{key}", f"unknown key; legal keys: {listed}")


def _fill(raw: Mapping, path: str, schema: Mapping[str, ParamSpec], defaults: Mapping[str, Any] | None = None) -> dict:
    """Validate ``raw`` against ``schema``; absent keys take defaults."""
    _unknown(raw, path, schema)
    out = {}
    for key, spec in schema.items():
        if key in raw:
            value = raw[key]
        elif defaults is not None and key in defaults:
            value = defaults[key]
        else:
            value = spec.default
        value, err = spec.check(value)
        if err:
            raise ValidationError(f"{path}.{key}", err)
        out[key] = value
    return out


def _compile_preprocessing(raw: Any, registry: TypeRegistry) -> PreprocessingSpec:
    raw = _mapping(raw, "preprocessing")
    type_names = [str(t) for t in registry.types()]
    _unknown(raw, "preprocessing", ["split", *type_names])
    split_raw = _mapping(raw.get("split"), "preprocessing.split")
    split = _fill(split_raw, "preprocessing.split", SPLIT_SCHEMA)
    total = split["train"] + split["validation"] + split["test"]
    if abs(total - 1.0) > 1e-9:
        raise ValidationError("preprocessing.split", f"ratios must sum to 1, got {total!r}")
    types = {}
    for t in registry.types():
        cap = registry.capabilities_of(t)
        types[str(t)] = _fill(_mapping(raw.get(str(t)), f"preprocessing.{t}"), f"preprocessing.{t}", cap.preprocessing)
    return PreprocessingSpec(SplitSpec(**split), types)


def _compile_component(raw: Any, path: str, kind: str, ftype: FeatureType, choices, default: str) -> ComponentSpec:
    if raw is None:
        raw = {}
    elif isinstance(raw, str):
        raw = {"name": raw}
    raw = _mapping(raw, path)
    name = raw.get("name", default)
    if not isinstance(name, str) or name not in choices:
        legal = ", ".join(sorted(choices))
        raise ValidationError(f"{path}.name", f"unknown {kind} {name!r} for type {ftype}; legal {kind}s: {legal}")
    info = choices[name]
    params = dict(raw)
    params.pop("name", None)
    for key in params:
        if key not in info.params:
            listed = ", ".join(sorted(info.params)) or "none"
            raise ValidationError(f"{path}.{key}", f"unknown parameter for {kind} {name!r}; legal parameters: {listed}")
    return ComponentSpec(name, _fill(params, path, info.params))


def _compile_feature(
    raw: Any, index: int, role: str, registry: TypeRegistry, pre: PreprocessingSpec, seen: set[str]
) -> FeatureSpec:
    loc = f"{role}.{index}"
    raw = _mapping(raw, loc)
    name = raw.get("name")
    if name is None:
        raise ValidationError(f"{loc}.name", "missing feature name")
    if not isinstance(name, str) or not _IDENT.match(name):
        raise ValidationError(f"{loc}.name", f"feature name must be an identifier, got {name!r}")
    loc = f"{role}.{name}"
    if name in seen:
        raise ValidationError(f"{loc}.name", f"duplicate feature name {name!r}")
    seen.add(name)
    if "type" not in raw:
        raise ValidationError(f"{loc}.type", "missing feature type")
    try:
        cap = registry.capabilities_of(raw["type"], as_output=(role == "output_features"))
    except (UnknownType, TypeError) as exc:
        raise ValidationError(f"{loc}.type", str(exc) if isinstance(exc, UnknownType) else "type must be a string") from None
    except UnknownCapability as exc:
        raise ValidationError(f"{loc}.type", str(exc)) from None
    ftype = cap.type
    is_output = role == "output_features"
    legal = ("name", "type", "preprocessing") + (("decoder", "loss_weight") if is_output else ("encoder",))
    if is_output and "encoder" in raw:
        raise ValidationError(f"{loc}.encoder", "output features take a decoder, not an encoder")
    if not is_output and "decoder" in raw:
        raise ValidationError(f"{loc}.decoder", "input features take an encoder, not a decoder")
    _unknown(raw, loc, legal)
    pre_raw = _mapping(raw.get("preprocessing"), f"{loc}.preprocessing")
    preprocessing = _fill(pre_raw, f"{loc}.preprocessing", cap.preprocessing, pre.types[str(ftype)])
    if is_output:
        decoder = _compile_component(raw.get("decoder"), f"{loc}.decoder", "decoder", ftype, cap.decoders, cap.default_decoder)
        weight, err = ParamSpec("float", 1.0, low=0.0).check(raw.get("loss_weight", 1.0))
        if err:
            raise ValidationError(f"{loc}.loss_weight", err)
        return FeatureSpec(name, ftype, decoder=decoder, preprocessing=preprocessing, loss_weight=weight)
    encoder = _compile_component(raw.get("encoder"), f"{loc}.encoder", "encoder", ftype, cap.encoders, cap.default_encoder)
    return FeatureSpec(name, ftype, encoder=encoder, preprocessing=preprocessing)


def _compile_features(raw: Mapping, role: str, registry, pre, seen) -> tuple[FeatureSpec, ...]:
    items = raw.get(role)
    if items is None:
        raise ValidationError(role, "at least one feature is required")
    if not isinstance(items, list):
        raise ValidationError(role, "must be a list of feature mappings")
    if not items:
        raise ValidationError(role, "at least one feature is required")
    return tuple(_compile_feature(item, i, role, registry, pre, seen) for i, item in enumerate(items))


def _compile_domain(raw: Any, loc: str, strategy: str, base_tree: dict) -> SearchDomain:
    from declml.config.paths import resolve_slot

    raw = _mapping(raw, loc)
    path = raw.get("path")
    if not isinstance(path, str) or not path:
        raise ValidationError(f"{loc}.path", "search parameter needs a config path string")
    if path.split(".")[0] == "hyperopt":
        raise ValidationError(f"{loc}.path", "cannot search over the hyperopt section itself")
    try:
        resolve_slot(base_tree, path)
    except Exception as exc:  # PathError
        raise ValidationError(f"{loc}.path", f"{path!r} does not resolve: {getattr(exc, 'reason', exc)}") from None
    kind = raw.get("type")
    if kind not in ("choice", "int", "float"):
        raise ValidationError(f"{loc}.type", f"must be one of [choice, int, float], got {kind!r}")
    if kind == "choice":
        _unknown(raw, loc, ("path", "type", "values"))
        values = raw.get("values")
        if not isinstance(values, list) or not values:
            raise ValidationError(f"{loc}.values", "must be a non-empty list")
        for v in values:
            if isinstance(v, (dict, list)):
                raise ValidationError(f"{loc}.values", "values must be scalars")
        return SearchDomain(path, kind, values=tuple(values))
    legal = ("path", "type", "low", "high") + (("scale",) if kind == "float" else ())
    _unknown(raw, loc, legal)
    bound = ParamSpec("int" if kind == "int" else "float", None)
    lo, err = bound.check(raw.get("low"))
    if err:
        raise ValidationError(f"{loc}.low", err)
    hi, err = bound.check(raw.get("high"))
    if err:
        raise ValidationError(f"{loc}.high", err)
    if not lo < hi:
        raise ValidationError(f"{loc}.high", f"range needs low < high, got [{lo}, {hi}]")
    scale = None
    if kind == "float":
        scale, err = ParamSpec("str", "linear", choices=("linear", "log")).check(raw.get("scale", "linear"))
        if err:
            raise ValidationError(f"{loc}.scale", err)
        if scale == "log" and lo <= 0:
            raise ValidationError(f"{loc}.low", "log scale needs low > 0")
        if strategy == "grid":
            raise ValidationError(f"{loc}.type", "grid search cannot enumerate a float range")
    return SearchDomain(path, kind, low=lo, high=hi, scale=scale)


def _compile_hyperopt(raw: Any, outputs: tuple[FeatureSpec, ...], registry: TypeRegistry, base_tree: dict) -> HyperoptSpec | None:
    if raw is None:
        return None
    raw = _mapping(raw, "hyperopt")
    _unknown(raw, "hyperopt", ("strategy", "samples", "seed", "split", "goal", "parameters"))
    head = _fill(
        {k: raw[k] for k in ("strategy", "samples", "seed", "split") if k in raw},
        "hyperopt",
        {
            "strategy": ParamSpec("str", "grid", choices=("grid", "random")),
            "samples": ParamSpec("int", 10, low=1, high=1_000_000),
            "seed": ParamSpec("int", 0, low=0, high=2**32 - 1),
            "split": ParamSpec("str", "validation", choices=("train", "validation", "test")),
        },
    )
    goal_raw = _mapping(raw.get("goal"), "hyperopt.goal")
    _unknown(goal_raw, "hyperopt.goal", ("output_feature", "metric", "direction"))
    out_name = goal_raw.get("output_feature", outputs[0].name)
    by_name = {f.name: f for f in outputs}
    if out_name not in by_name:
        legal = ", ".join(by_name)
        raise ValidationError("hyperopt.goal.output_feature", f"{out_name!r} is not an output feature; outputs: {legal}")
    metrics = registry.capabilities_of(by_name[out_name].type).metrics
    metric = goal_raw.get("metric", "loss")
    if metric != "loss" and metric not in metrics:
        legal = ", ".join(("loss",) + metrics)
        raise InvalidGoalMetric("hyperopt.goal.metric", f"{metric!r} is not produced for {out_name!r}; legal: {legal}")
    direction, err = ParamSpec("str", None, choices=("minimize", "maximize")).check(
        goal_raw.get("direction", "minimize" if metric in _MINIMIZED else "maximize")
    )
    if err:
        raise ValidationError("hyperopt.goal.direction", err)
    params_raw = raw.get("parameters")
    if not isinstance(params_raw, list) or not params_raw:
        raise ValidationError("hyperopt.parameters", "must be a non-empty list of search parameters")
    domains = []
    seen_paths: set[str] = set()
    for i, item in enumerate(params_raw):
        dom = _compile_domain(item, f"hyperopt.parameters.{i}", head["strategy"], base_tree)
        if dom.path in seen_paths:
            raise ValidationError(f"hyperopt.parameters.{i}.path", f"duplicate search path {dom.path!r}")
        seen_paths.add(dom.path)
        domains.append(dom)
    return HyperoptSpec(
        head["strategy"], head["samples"], head["seed"], head["split"], GoalSpec(out_name, metric, direction), tuple(domains)
    )


def compile_config(raw: Any, registry: TypeRegistry = DEFAULT_REGISTRY) -> PipelineConfig:
    """Validate a raw tree and fill every omitted parameter with its default.

    Raises :class:`ValidationError` naming the single offending config path.
    """
    if not isinstance(raw, Mapping):
        raise ValidationError("<root>", f"configuration must be a mapping, got {type(raw).__name__}")
    for key in raw:
        if key not in _TOP_LEVEL:
            raise ValidationError(str(key), f"unknown top-level key; legal keys: {', '.join(_TOP_LEVEL)}")
    pre = _compile_preprocessing(raw.get("preprocessing"), registry)
    seen: set[str] = set()
    inputs = _compile_features(raw, "input_features", registry, pre, seen)
    outputs = _compile_features(raw, "output_features", registry, pre, seen)
    combiner = CombinerSpec(**_fill(_mapping(raw.get("combiner"), "combiner"), "combiner", COMBINER_SCHEMA))
    training = TrainingSpec(**_fill(_mapping(raw.get("training"), "training"), "training", TRAINING_SCHEMA))
    config = PipelineConfig(inputs, outputs, combiner, training, pre, None)
    hyperopt = _compile_hyperopt(raw.get("hyperopt"), outputs, registry, config.to_dict())
    if hyperopt is None:
        return config
    return PipelineConfig(inputs, outputs, combiner, training, pre, hyperopt)
