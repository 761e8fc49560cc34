"""Per-type metrics and split evaluation reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Hashable, Mapping, Sequence

import numpy as np

from declml.data.encoding import EncodedDataset
from declml.data.metadata import NumericMetadata
from declml.errors import EmptySplit, LengthMismatch, UnknownMetric
from declml.features import DEFAULT_REGISTRY, FeatureType, TypeRegistry

REPORT_SCHEMA_VERSION = 1
R2_DEGENERATE = -1e30
DECISION_THRESHOLD = 0.5


def _as_sets(values) -> list[frozenset]:
    """Rows of a 0/1 indicator matrix or an iterable of collections -> sets."""
    if isinstance(values, np.ndarray) and values.ndim == 2:
        return [frozenset(np.flatnonzero(row > 0.5).tolist()) for row in values]
    return [frozenset(v) for v in values]


def _floats(values) -> np.ndarray:
    return np.asarray(values, dtype=np.float64).reshape(-1)


def accuracy(pred: Sequence[Hashable], target: Sequence[Hashable]) -> float:
    if len(pred) == 0:
        return 0.0
    return sum(1 for p, t in zip(pred, target) if p == t) / len(pred)


def mse(pred, target) -> float:
    p, t = _floats(pred), _floats(target)
    return float(np.mean((p - t) ** 2)) if len(p) else 0.0


def mae(pred, target) -> float:
    p, t = _floats(pred), _floats(target)
    return float(np.mean(np.abs(p - t))) if len(p) else 0.0


def r2(pred, target) -> float:
    """``1 - SSres/SStot``; degenerate targets give 0.0 (exact fit) or a sentinel."""
    p, t = _floats(pred), _floats(target)
    ss_res = float(np.sum((t - p) ** 2))
    ss_tot = float(np.sum((t - t.mean()) ** 2)) if len(t) else 0.0
    if ss_tot == 0.0:
        return 0.0 if ss_res == 0.0 else R2_DEGENERATE
    return 1.0 - ss_res / ss_tot


def jaccard(pred, target) -> float:
    ps, ts = _as_sets(pred), _as_sets(target)
    if not ps:
        return 0.0
    total = 0.0
    for p, t in zip(ps, ts):
        union = len(p | t)
        total += 1.0 if union == 0 else len(p & t) / union
    return total / len(ps)


def micro_f1(pred, target) -> float:
    """F1 from TP/FP/FN pooled over all rows and labels; 1.0 when nothing is positive."""
    tp = fp = fn = 0
    for p, t in zip(_as_sets(pred), _as_sets(target)):
        tp += len(p & t)
        fp += len(p - t)
        fn += len(t - p)
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


METRICS = {
    "accuracy": accuracy,
    "mse": mse,
    "mae": mae,
    "r2": r2,
    "jaccard": jaccard,
    "micro_f1": micro_f1,
}


def compute_metric(metric: str, predictions, targets) -> float:
    try:
        fn = METRICS[metric]
    except KeyError:
        raise UnknownMetric(f"unknown metric {metric!r}; known: {', '.join(METRICS)}") from None
    if len(predictions) != len(targets):
        raise LengthMismatch(f"{metric}: {len(predictions)} predictions vs {len(targets)} targets")
    return float(fn(predictions, targets))


@dataclass
class EvalReport:
    split: str
    row_count: int
    combined_loss: float
    losses: dict[str, float]
    metrics: dict[str, dict[str, float]]
    config_fingerprint: str
    schema_version: int = REPORT_SCHEMA_VERSION
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        d = {
            "schema_version": self.schema_version,
            "split": self.split,
            "row_count": self.row_count,
            "combined_loss": self.combined_loss,
            "losses": dict(self.losses),
            "metrics": {k: dict(v) for k, v in self.metrics.items()},
            "config_fingerprint": self.config_fingerprint,
        }
        d.update(self.extra)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EvalReport":
        return cls(
            split=d["split"],
            row_count=d["row_count"],
            combined_loss=d["combined_loss"],
            losses=dict(d["losses"]),
            metrics={k: dict(v) for k, v in d["metrics"].items()},
            config_fingerprint=d["config_fingerprint"],
            schema_version=d["schema_version"],
        )


def head_metrics(ftype: FeatureType, metric_ids: Sequence[str], values: np.ndarray, target: np.ndarray, meta) -> dict[str, float]:
    """Metrics for one output from its probabilities/z-values and encoded target."""
    ftype = FeatureType(ftype)
    if ftype is FeatureType.NUMERIC:
        assert isinstance(meta, NumericMetadata)
        pred = values.astype(np.float64).reshape(-1) * meta.std + meta.mean
        true = target.astype(np.float64).reshape(-1) * meta.std + meta.mean
    elif ftype is FeatureType.CATEGORY:
        pred = np.argmax(values, axis=1).tolist()
        true = target.tolist()
    elif ftype is FeatureType.BINARY:
        pred = (values.reshape(-1) >= DECISION_THRESHOLD).tolist()
        true = (target.reshape(-1) > 0.5).tolist()
    else:
        pred = (values >= DECISION_THRESHOLD).astype(np.float64)
        true = target
    return {m: compute_metric(m, pred, true) for m in metric_ids}


def evaluate_split(model, data: EncodedDataset, split: str = "test", registry: TypeRegistry = DEFAULT_REGISTRY) -> EvalReport:
    """One full-batch forward over ``data`` in row order; metrics in raw space."""
    if data.row_count == 0:
        raise EmptySplit(f"split {split!r} has no rows")
    batch = data.batch()
    out = model.forward(batch)
    total, losses = model.loss(out.logits, batch.targets)
    metrics = {}
    for dec in model.decoders:
        values = dec.probabilities(out.logits[dec.feature].data)
        caps = registry.capabilities_of(dec.ftype, as_output=True)
        metrics[dec.feature] = head_metrics(dec.ftype, caps.metrics, values, batch.targets[dec.feature], model.metadata[dec.feature])
    return EvalReport(
        split=split,
        row_count=data.row_count,
        combined_loss=float(total.data),
        losses=losses,
        metrics=metrics,
        config_fingerprint=model.config.fingerprint(),
    )
