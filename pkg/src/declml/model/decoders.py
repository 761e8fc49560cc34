"""Output decoders and their registered losses."""

from __future__ import annotations

from typing import Any, Mapping

import numpy as np

from declml.autodiff import Parameter, Tensor, ops
from declml.data.metadata import FeatureMetadata
from declml.features import FeatureType
from declml.model.layers import Dense


class Decoder:
    """Linear head from the combiner output to this type's logits."""

    decoder_id = ""
    ftype: FeatureType

    def __init__(self, feature: str, params: Mapping[str, Any], meta: FeatureMetadata, in_size: int,
                 loss_weight: float, rng: np.random.Generator):
        self.feature = feature
        self.params = dict(params)
        self.loss_weight = loss_weight
        self.threshold = self.params.get("threshold", 0.5)
        self.out_size = self.logit_width(meta)
        self.logits = Dense(f"{feature}.decoder.logits", in_size, self.out_size, rng)

    def logit_width(self, meta: FeatureMetadata) -> int:
        return 1

    def parameters(self) -> list[Parameter]:
        return self.logits.parameters()

    def __call__(self, hidden: Tensor) -> Tensor:
        return self.logits(hidden)

    def loss(self, logits: Tensor, target: np.ndarray) -> Tensor:
        return output_loss(self.ftype, logits, target)

    def probabilities(self, logits: np.ndarray) -> np.ndarray:
        """Post-activation values (or z-space regressions) used for decoding."""
        return ops.sigmoid_values(logits)


class Regressor(Decoder):
    decoder_id = "regressor"
    ftype = FeatureType.NUMERIC

    def probabilities(self, logits):
        return logits


class BinaryClassifier(Decoder):
    decoder_id = "binary_classifier"
    ftype = FeatureType.BINARY


class Classifier(Decoder):
    decoder_id = "classifier"
    ftype = FeatureType.CATEGORY

    def logit_width(self, meta):
        return meta.size

    def probabilities(self, logits):
        return ops.softmax(logits)


class MultiLabel(Decoder):
    decoder_id = "multi_label"
    ftype = FeatureType.SET

    def logit_width(self, meta):
        return meta.size


DECODERS: dict[tuple[FeatureType, str], type[Decoder]] = {
    (cls.ftype, cls.decoder_id): cls for cls in (Regressor, BinaryClassifier, Classifier, MultiLabel)
}


def output_loss(ftype: FeatureType, logits: Tensor, target: np.ndarray) -> Tensor:
    """The registered loss for an output of type ``ftype``."""
    ftype = FeatureType(ftype)
    if ftype is FeatureType.NUMERIC:
        return ops.mse(logits, Tensor(target))
    if ftype is FeatureType.CATEGORY:
        return ops.softmax_cross_entropy(logits, target)[0]
    if ftype in (FeatureType.BINARY, FeatureType.SET):
        return ops.sigmoid_bce(logits, Tensor(target))
    raise ValueError(f"type {ftype} has no loss")
