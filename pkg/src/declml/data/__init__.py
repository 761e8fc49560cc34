"""Tabular ingestion, splitting, metadata fitting and tensor encoding."""

from declml.data.dataset import SPLITS, ColumnarDataset, SplitAssignment, assign_splits, ingest_table
from declml.data.encoding import (
    EncodedDataset,
    TensorBatch,
    decode_column,
    decode_predictions,
    encode_column,
    encode_dataset,
)
from declml.data.metadata import (
    BinaryMetadata,
    CategoryMetadata,
    FeatureMetadata,
    NumericMetadata,
    SetMetadata,
    TextMetadata,
    VectorMetadata,
    fit_feature,
    fit_metadata,
    metadata_from_dict,
    metadata_to_dict,
    tokenize,
)

__all__ = [
    "SPLITS",
    "BinaryMetadata",
    "CategoryMetadata",
    "ColumnarDataset",
    "EncodedDataset",
    "FeatureMetadata",
    "NumericMetadata",
    "SetMetadata",
    "SplitAssignment",
    "TensorBatch",
    "TextMetadata",
    "VectorMetadata",
    "assign_splits",
    "decode_column",
    "decode_predictions",
    "encode_column",
    "encode_dataset",
    "fit_feature",
    "fit_metadata",
    "ingest_table",
    "metadata_from_dict",
    "metadata_to_dict",
    "tokenize",
]
