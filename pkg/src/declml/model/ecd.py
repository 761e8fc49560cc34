"""Encoders-combiner-decoders model: construction, forward pass, multi-task loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from declml.autodiff import Parameter, Tensor, ops
from declml.data.encoding import TensorBatch
from declml.data.metadata import FeatureMetadata
from declml.errors import MissingTarget, ShapeMismatch
from declml.features import FeatureType
from declml.model.decoders import DECODERS, Decoder, output_loss
from declml.model.encoders import Encoder, build_encoder
from declml.model.layers import Dense


class ConcatCombiner:
    """Concatenate encoder outputs in declared order, then a fully connected stack."""

    def __init__(self, input_size: int, num_fc_layers: int, fc_size: int, activation: str, rng: np.random.Generator):
        self.input_size = input_size
        self.activation = activation
        self.layers: list[Dense] = []
        size = input_size
        for i in range(num_fc_layers):
            self.layers.append(Dense(f"combiner.fc_{i}", size, fc_size, rng))
            size = fc_size
        self.output_size = size

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def __call__(self, encoded: list[Tensor]) -> Tensor:
        h = ops.concat(encoded)
        act = ops.ACTIVATIONS[self.activation]
        for layer in self.layers:
            h = act(layer(h))
        return h


@dataclass
class ForwardOutput:
    logits: dict[str, Tensor]
    hidden: Tensor
    encoded: dict[str, Tensor]


class EcdModel:
    def __init__(self, config, metadata: Mapping[str, FeatureMetadata], encoders: list[Encoder],
                 combiner: ConcatCombiner, decoders: list[Decoder], seed: int):
        self.config = config
        self.metadata = dict(metadata)
        self.encoders = encoders
        self.combiner = combiner
        self.decoders = decoders
        self.seed = seed
        names = [p.name for p in self.parameters()]
        if len(set(names)) != len(names):
            raise AssertionError("duplicate parameter names")

    def parameters(self) -> list[Parameter]:
        params = [p for e in self.encoders for p in e.parameters()]
        params += self.combiner.parameters()
        params += [p for d in self.decoders for p in d.parameters()]
        return params

    def named_parameters(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    @property
    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    @property
    def loss_weights(self) -> dict[str, float]:
        return {d.feature: d.loss_weight for d in self.decoders}

    @property
    def output_types(self) -> dict[str, FeatureType]:
        return {d.feature: d.ftype for d in self.decoders}

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        params = self.named_parameters()
        if set(state) != set(params):
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            raise ShapeMismatch(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ShapeMismatch(f"{name}: expected shape {p.shape}, got {arr.shape}")
            p.data[...] = arr

    def forward(self, batch: TensorBatch | Mapping[str, np.ndarray]) -> ForwardOutput:
        inputs = batch.inputs if isinstance(batch, TensorBatch) else batch
        rows = None
        encoded = {}
        for enc in self.encoders:
            try:
                x = inputs[enc.feature]
            except KeyError:
                raise ShapeMismatch(f"batch has no input {enc.feature!r}") from None
            if rows is None:
                rows = len(x)
            elif len(x) != rows:
                raise ShapeMismatch(f"input {enc.feature!r} has {len(x)} rows, expected {rows}")
            out = enc(x)
            if out.shape != (rows, enc.output_size):
                raise AssertionError(f"encoder {enc.prefix} broke its output contract: {out.shape}")
            encoded[enc.feature] = out
        hidden = self.combiner(list(encoded.values()))
        logits = {d.feature: d(hidden) for d in self.decoders}
        return ForwardOutput(logits, hidden, encoded)

    def loss(self, logits: Mapping[str, Tensor], targets: Mapping[str, np.ndarray]) -> tuple[Tensor, dict[str, float]]:
        return multi_task_loss(logits, targets, self.loss_weights, self.output_types)

    def predict_values(self, inputs: TensorBatch | Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Probabilities per output (z-space values for numeric outputs)."""
        out = self.forward(inputs)
        return {d.feature: d.probabilities(out.logits[d.feature].data) for d in self.decoders}


def forward(model: EcdModel, batch: TensorBatch) -> ForwardOutput:
    return model.forward(batch)


def multi_task_loss(
    logits: Mapping[str, Tensor],
    targets: Mapping[str, np.ndarray],
    weights: Mapping[str, float],
    types: Mapping[str, FeatureType],
) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of each output's registered loss.

    Returns the scalar total (on the tape) and the unweighted per-output values.
    """
    total = None
    parts: dict[str, float] = {}
    for name, lg in logits.items():
        if name not in targets:
            raise MissingTarget(f"no target for output {name!r}")
        if name not in weights:
            raise MissingTarget(f"no loss weight for output {name!r}")
        li = output_loss(types[name], lg, targets[name])
        parts[name] = float(li.data)
        term = ops.scale(li, weights[name])
        total = term if total is None else ops.add(total, term)
    if total is None:
        raise MissingTarget("no outputs to compute a loss for")
    return total, parts


def build_model(config, metadata: Mapping[str, FeatureMetadata], seed: int | None = None) -> EcdModel:
    """Instantiate encoders, combiner and decoders for ``config``.

    One seeded generator is consumed in construction order (encoders in input
    order, combiner layers, decoders in output order), so identical
    ``(config, metadata, seed)`` gives bit-identical initial parameters.
    """
    if seed is None:
        seed = config.training.seed
    rng = np.random.default_rng(seed)
    encoders = [
        build_encoder(f.type, f.encoder.name, f.name, f.encoder.params, metadata[f.name], rng)
        for f in config.input_features
    ]
    c = config.combiner
    combiner = ConcatCombiner(sum(e.output_size for e in encoders), c.num_fc_layers, c.fc_size, c.activation, rng)
    decoders = [
        DECODERS[(f.type, f.decoder.name)](f.name, f.decoder.params, metadata[f.name], combiner.output_size, f.loss_weight, rng)
        for f in config.output_features
    ]
    return EcdModel(config, metadata, encoders, combiner, decoders, seed)


def cast_model(model: EcdModel, dtype) -> EcdModel:
    """Copy of ``model`` with every parameter converted to ``dtype``."""
    clone = build_model(model.config, model.metadata, model.seed)
    for src, dst in zip(model.parameters(), clone.parameters()):
        dst.data = np.ascontiguousarray(src.data, dtype=dtype)
    return clone


__all__ = [
    "ConcatCombiner",
    "EcdModel",
    "ForwardOutput",
    "build_model",
    "cast_model",
    "forward",
    "multi_task_loss",
]
