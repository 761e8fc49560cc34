"""Input encoders. Every encoder maps its column to ``[batch, output_size]``."""

from __future__ import annotations

from typing import Any, Mapping

import numpy as np

from declml.autodiff import Parameter, Tensor, ops
from declml.data.metadata import FeatureMetadata
from declml.features import FeatureType
from declml.model.layers import Dense, Embedding


class Encoder:
    encoder_id: str = ""
    output_size: int

    def __init__(self, feature: str, params: Mapping[str, Any], meta: FeatureMetadata, rng: np.random.Generator):
        self.feature = feature
        self.prefix = f"{feature}.encoder"
        self.build(dict(params), meta, rng)

    def build(self, params: dict[str, Any], meta: FeatureMetadata, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def parameters(self) -> list[Parameter]:
        return []

    def __call__(self, x: np.ndarray) -> Tensor:
        raise NotImplementedError


class Passthrough(Encoder):
    """Width-1 value (z-scored numeric or 0/1 binary) fed straight through."""

    encoder_id = "passthrough"

    def build(self, params, meta, rng):
        self.output_size = 1

    def __call__(self, x):
        return Tensor(x)


class DenseEncoder(Encoder):
    """Affine projection of a fixed-width float input (numeric or vector)."""

    encoder_id = "dense"

    def build(self, params, meta, rng):
        in_size = getattr(meta, "dim", 1)
        self.output_size = params["output_size"]
        self.dense = Dense(f"{self.prefix}.dense", in_size, self.output_size, rng)

    def parameters(self):
        return self.dense.parameters()

    def __call__(self, x):
        return self.dense(Tensor(x))


class CategoryEmbedding(Encoder):
    encoder_id = "embedding"

    def build(self, params, meta, rng):
        self.output_size = params["embedding_size"]
        self.embeddings = Embedding(f"{self.prefix}.embeddings", meta.size, self.output_size, rng)

    def parameters(self):
        return self.embeddings.parameters()

    def __call__(self, x):
        return self.embeddings(x)


class OneHotDense(Encoder):
    encoder_id = "onehot_dense"

    def build(self, params, meta, rng):
        self.vocab = meta.size
        self.output_size = params["output_size"]
        self.dense = Dense(f"{self.prefix}.dense", self.vocab, self.output_size, rng)

    def parameters(self):
        return self.dense.parameters()

    def __call__(self, x):
        onehot = np.zeros((len(x), self.vocab))
        onehot[np.arange(len(x)), x] = 1.0
        return self.dense(Tensor(onehot))


class MultiHot(Encoder):
    encoder_id = "multi_hot"

    def build(self, params, meta, rng):
        self.output_size = params["output_size"]
        self.dense = Dense(f"{self.prefix}.dense", meta.size, self.output_size, rng)

    def parameters(self):
        return self.dense.parameters()

    def __call__(self, x):
        return self.dense(Tensor(x))


class TextEmbed(Encoder):
    """Token embeddings averaged over non-padding positions, then projected."""

    encoder_id = "embed"

    def build(self, params, meta, rng):
        self.output_size = params["output_size"]
        self.embeddings = Embedding(f"{self.prefix}.embeddings", meta.size, params["embedding_size"], rng)
        self.dense = Dense(f"{self.prefix}.dense", params["embedding_size"], self.output_size, rng)

    def parameters(self):
        return self.embeddings.parameters() + self.dense.parameters()

    def __call__(self, x):
        pooled = ops.masked_mean(self.embeddings(x), x != 0)
        return self.dense(pooled)


class BagOfWords(Encoder):
    """Per-row token counts (padding excluded) through a dense layer."""

    encoder_id = "bow"

    def build(self, params, meta, rng):
        self.vocab = meta.size
        self.output_size = params["output_size"]
        self.dense = Dense(f"{self.prefix}.dense", self.vocab, self.output_size, rng)

    def parameters(self):
        return self.dense.parameters()

    def __call__(self, x):
        counts = np.zeros((x.shape[0], self.vocab))
        rows = np.repeat(np.arange(x.shape[0]), x.shape[1])
        np.add.at(counts, (rows, x.reshape(-1)), 1.0)
        counts[:, 0] = 0.0
        return self.dense(Tensor(counts))


ENCODERS: dict[tuple[FeatureType, str], type[Encoder]] = {
    (FeatureType.BINARY, "passthrough"): Passthrough,
    (FeatureType.NUMERIC, "passthrough"): Passthrough,
    (FeatureType.NUMERIC, "dense"): DenseEncoder,
    (FeatureType.VECTOR, "dense"): DenseEncoder,
    (FeatureType.CATEGORY, "embedding"): CategoryEmbedding,
    (FeatureType.CATEGORY, "onehot_dense"): OneHotDense,
    (FeatureType.SET, "multi_hot"): MultiHot,
    (FeatureType.TEXT, "embed"): TextEmbed,
    (FeatureType.TEXT, "bow"): BagOfWords,
}


def build_encoder(ftype: FeatureType, encoder_id: str, feature: str, params, meta, rng) -> Encoder:
    return ENCODERS[(FeatureType(ftype), encoder_id)](feature, params, meta, rng)
