"""Deterministic minibatch training with validation tracking and early stopping."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from declml.autodiff import Parameter, Tape, backward
from declml.config.schema import TrainingSpec
from declml.data.encoding import EncodedDataset
from declml.errors import EmptySplit, NonFiniteLoss, ShapeMismatch
from declml.evaluate import evaluate_split


@dataclass
class OptimizerState:
    """Auxiliary tensors keyed by parameter name, mirroring parameter shapes."""

    step: int = 0
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(params: Sequence[Parameter], grads: Mapping[str, np.ndarray], state: OptimizerState, spec: TrainingSpec) -> None:
    """Update ``params`` in place.

    sgd:  buf = momentum * buf + g;  p -= lr * buf
    adam: bias-corrected first/second moments with (beta1, beta2, epsilon).
    """
    state.step += 1
    lr = spec.learning_rate
    for p in params:
        g = grads[p.name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient for {p.name} has shape {g.shape}, parameter has {p.shape}")
        g = g.astype(p.dtype, copy=False)
        if spec.optimizer == "sgd":
            buf = state.buffers.get(p.name)
            buf = g.copy() if buf is None else spec.momentum * buf + g
            state.buffers[p.name] = buf
            p.data -= (lr * buf).astype(p.dtype, copy=False)
        elif spec.optimizer == "adam":
            m = state.first.get(p.name)
            v = state.second.get(p.name)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            m = spec.beta1 * m + (1 - spec.beta1) * g
            v = spec.beta2 * v + (1 - spec.beta2) * g * g
            state.first[p.name], state.second[p.name] = m, v
            m_hat = m / (1 - spec.beta1**state.step)
            v_hat = v / (1 - spec.beta2**state.step)
            p.data -= (lr * m_hat / (np.sqrt(v_hat) + spec.epsilon)).astype(p.dtype, copy=False)
        else:
            raise ValueError(f"unknown optimizer {spec.optimizer!r}")


def should_stop(history: Sequence[float], patience: int) -> bool:
    """True iff the best (first minimal) value is more than ``patience`` epochs old."""
    best = int(np.argmin(np.asarray(history, dtype=np.float64)))
    return (len(history) - 1 - best) > patience


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    validation_loss: float
    validation_metrics: dict[str, dict[str, float]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "validation_loss": self.validation_loss,
            "validation_metrics": self.validation_metrics,
        }


@dataclass
class TrainingReport:
    epochs: list[EpochRecord]
    best_epoch: int
    stop_reason: str
    wall_seconds: float
    test: dict[str, Any] | None = None

    @property
    def best(self) -> EpochRecord:
        return self.epochs[self.best_epoch - 1]

    def to_dict(self, include_timing: bool = True) -> dict[str, Any]:
        d = {
            "best_epoch": self.best_epoch,
            "stop_reason": self.stop_reason,
            "epochs": [e.to_dict() for e in self.epochs],
        }
        if self.test is not None:
            d["test"] = self.test
        if include_timing:
            d["wall_seconds"] = self.wall_seconds
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TrainingReport":
        return cls(
            epochs=[EpochRecord(**e) for e in d["epochs"]],
            best_epoch=d["best_epoch"],
            stop_reason=d["stop_reason"],
            wall_seconds=d.get("wall_seconds", 0.0),
            test=d.get("test"),
        )


def train(model, train_set: EncodedDataset, validation_set: EncodedDataset, spec: TrainingSpec | None = None):
    """Train ``model`` in place and return ``(model, report)``.

    Each epoch visits the training rows once in a fresh seeded permutation.
    The model ends holding the weights of the epoch with the lowest combined
    validation loss (earliest on ties).
    """
    spec = spec or model.config.training
    if train_set.row_count == 0:
        raise EmptySplit("training split has no rows")
    if validation_set.row_count == 0:
        raise EmptySplit("validation split has no rows")
    start = time.perf_counter()
    rng = np.random.default_rng(spec.seed)
    params = model.parameters()
    state = OptimizerState()
    records: list[EpochRecord] = []
    best_loss = math.inf
    best_state = model.state_dict()
    best_epoch = 0
    stop_reason = "completed"
    for epoch in range(1, spec.epochs + 1):
        seen = 0
        weighted = 0.0
        for b, batch in enumerate(train_set.batches(spec.batch_size, rng), start=1):
            with Tape() as tape:
                out = model.forward(batch)
                loss, _ = model.loss(out.logits, batch.targets)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NonFiniteLoss(f"non-finite training loss {value} at epoch {epoch}, batch {b}")
            grads = backward(loss, tape, params)
            optimizer_step(params, grads, state, spec)
            weighted += value * len(batch)
            seen += len(batch)
        val = evaluate_split(model, validation_set, "validation")
        if not math.isfinite(val.combined_loss):
            raise NonFiniteLoss(f"non-finite validation loss at epoch {epoch}")
        records.append(EpochRecord(epoch, weighted / seen, val.combined_loss, val.metrics))
        if val.combined_loss < best_loss:
            best_loss = val.combined_loss
            best_epoch = epoch
            best_state = model.state_dict()
        if epoch < spec.epochs and should_stop([r.validation_loss for r in records], spec.early_stop):
            stop_reason = "early_stopped"
            break
    model.load_state_dict(best_state)
    report = TrainingReport(records, best_epoch, stop_reason, time.perf_counter() - start)
    return model, report
