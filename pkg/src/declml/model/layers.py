"""Parameterized building blocks shared by encoders, combiner and decoders."""

from __future__ import annotations

import math

import numpy as np

from declml.autodiff import Parameter, Tensor, float_dtype, ops


class Dense:
    """``x @ W + b`` with Glorot-uniform ``W[in, out]`` and zero ``b``."""

    def __init__(self, prefix: str, in_size: int, out_size: int, rng: np.random.Generator):
        limit = math.sqrt(6.0 / (in_size + out_size)) if in_size + out_size else 0.0
        w = rng.uniform(-limit, limit, size=(in_size, out_size))
        self.weight = Parameter(f"{prefix}.weight", w.astype(float_dtype()))
        self.bias = Parameter(f"{prefix}.bias", np.zeros(out_size, dtype=float_dtype()))
        self.in_size = in_size
        self.out_size = out_size

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add_bias(ops.matmul(x, self.weight), self.bias)


class Embedding:
    """Lookup table ``[V, d]`` initialized from normal(0, 1/sqrt(d))."""

    def __init__(self, prefix: str, num_rows: int, dim: int, rng: np.random.Generator):
        table = rng.normal(0.0, 1.0 / math.sqrt(dim), size=(num_rows, dim))
        self.weight = Parameter(f"{prefix}.weight", table.astype(float_dtype()))
        self.dim = dim

    def parameters(self) -> list[Parameter]:
        return [self.weight]

    def __call__(self, indices: np.ndarray) -> Tensor:
        return ops.embedding_lookup(self.weight, indices)
