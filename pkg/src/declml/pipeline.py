"""End-to-end orchestration: raw table in, trained pipeline out."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from declml.config.schema import PipelineConfig
from declml.data.dataset import ColumnarDataset, SplitAssignment, assign_splits
from declml.data.encoding import EncodedDataset, decode_predictions, encode_dataset
from declml.data.metadata import FeatureMetadata, fit_metadata
from declml.evaluate import EvalReport, evaluate_split
from declml.model import EcdModel, build_model
from declml.train import TrainingReport, train


@dataclass
class Pipeline:
    """A trained model together with everything needed to serve raw rows."""

    config: PipelineConfig
    metadata: dict[str, FeatureMetadata]
    model: EcdModel

    def encode(self, ds: ColumnarDataset, with_targets: bool = True) -> EncodedDataset:
        return encode_dataset(ds, self.metadata, self.config, with_targets=with_targets)

    def predict_values(self, ds: ColumnarDataset) -> dict[str, np.ndarray]:
        """Per-output probabilities (z-space values for numeric outputs)."""
        ds.require(f.name for f in self.config.input_features)
        enc = self.encode(ds, with_targets=False)
        return self.model.predict_values(enc.inputs)

    def predict(self, rows: Sequence[Mapping[str, Any]] | ColumnarDataset) -> list[dict[str, Any]]:
        """Raw-space predictions with probabilities, one dict per input row."""
        return predict_rows(self, rows)

    def evaluate(self, ds: ColumnarDataset, split: str = "test") -> EvalReport:
        ds.require(f.name for f in self.config.features)
        return evaluate_split(self.model, self.encode(ds), split)


def _as_dataset(rows, columns: Sequence[str]) -> ColumnarDataset:
    if isinstance(rows, ColumnarDataset):
        return rows
    return ColumnarDataset.from_rows(list(rows), columns)


def predict_rows(pipeline: Pipeline, rows) -> list[dict[str, Any]]:
    """Decode each output: ``<name>`` value and, for classifier heads, ``<name>_probability``.

    Classification probability is that of the predicted class; binary gives
    P(true); set gives a mapping item -> probability.
    """
    names = [f.name for f in pipeline.config.input_features]
    ds = _as_dataset(rows, names)
    if ds.row_count == 0:
        return []
    values = pipeline.predict_values(ds)
    thresholds = {d.feature: d.threshold for d in pipeline.model.decoders}
    decoded = decode_predictions(values, pipeline.metadata, thresholds)
    results: list[dict[str, Any]] = [{} for _ in range(ds.row_count)]
    for dec in pipeline.model.decoders:
        name, v = dec.feature, values[dec.feature]
        meta = pipeline.metadata[name]
        for i, row in enumerate(results):
            row[name] = decoded[name][i]
            if dec.decoder_id == "classifier":
                row[f"{name}_probability"] = float(np.max(v[i]))
            elif dec.decoder_id == "binary_classifier":
                row[f"{name}_probability"] = float(v[i, 0])
            elif dec.decoder_id == "multi_label":
                row[f"{name}_probability"] = {item: float(p) for item, p in zip(meta.vocab, v[i])}
    return results


@dataclass
class TrainResult:
    pipeline: Pipeline
    report: TrainingReport
    splits: SplitAssignment
    test_report: EvalReport | None


def prepare(config: PipelineConfig, dataset: ColumnarDataset, split_column: str | None = None):
    """Split the table, fit metadata on train, encode all three splits."""
    dataset.require(f.name for f in config.features)
    column = split_column or config.preprocessing.split.column
    splits = assign_splits(dataset, config.preprocessing.split.ratios, config.training.seed, column)
    train_ds = dataset.take(splits.indices("train"))
    meta = fit_metadata(train_ds, config)
    encoded = {
        name: encode_dataset(dataset.take(splits.indices(name)), meta, config) for name in ("train", "validation", "test")
    }
    return splits, meta, encoded


def train_pipeline(config: PipelineConfig, dataset: ColumnarDataset, split_column: str | None = None) -> TrainResult:
    splits, meta, encoded = prepare(config, dataset, split_column)
    model = build_model(config, meta, config.training.seed)
    model, report = train(model, encoded["train"], encoded["validation"], config.training)
    test_report = None
    if encoded["test"].row_count:
        test_report = evaluate_split(model, encoded["test"], "test")
        report.test = test_report.to_dict()
    return TrainResult(Pipeline(config, meta, model), report, splits, test_report)
