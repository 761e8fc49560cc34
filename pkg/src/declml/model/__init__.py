"""The encoders-combiner-decoders model."""

from declml.model.decoders import DECODERS, Decoder, output_loss
from declml.model.ecd import ConcatCombiner, EcdModel, ForwardOutput, build_model, cast_model, forward, multi_task_loss
from declml.model.encoders import ENCODERS, Encoder

__all__ = [
    "DECODERS",
    "ENCODERS",
    "ConcatCombiner",
    "Decoder",
    "EcdModel",
    "Encoder",
    "ForwardOutput",
    "build_model",
    "cast_model",
    "forward",
    "multi_task_loss",
    "output_loss",
]
