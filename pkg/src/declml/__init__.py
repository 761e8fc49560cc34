"""Declarative machine learning: typed features in, trained encoder-combiner-decoder models out."""

from declml.artifact import load_artifact, predict_raw, save_artifact
from declml.config import canonical_render, compile_config, load_config, override_path
from declml.data import assign_splits, ingest_table
from declml.evaluate import compute_metric, evaluate_split
from declml.hyperopt import expand_grid, run_search, sample_random
from declml.model import build_model
from declml.pipeline import Pipeline, train_pipeline
from declml.train import train

__version__ = "0.1.0"

__all__ = [
    "Pipeline",
    "assign_splits",
    "build_model",
    "canonical_render",
    "compile_config",
    "compute_metric",
    "evaluate_split",
    "expand_grid",
    "ingest_table",
    "load_artifact",
    "load_config",
    "override_path",
    "predict_raw",
    "run_search",
    "sample_random",
    "save_artifact",
    "train",
    "train_pipeline",
]
