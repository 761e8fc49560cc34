"""Minimal dense-tensor core with reverse-mode differentiation."""

from declml.autodiff import ops
from declml.autodiff.gradcheck import numerical_gradient, relative_error
from declml.autodiff.tensor import (
    Parameter,
    Tape,
    Tensor,
    backward,
    check_mode,
    float_dtype,
    gradients,
)

__all__ = [
    "Parameter",
    "Tape",
    "Tensor",
    "backward",
    "check_mode",
    "float_dtype",
    "gradients",
    "numerical_gradient",
    "ops",
    "relative_error",
]
