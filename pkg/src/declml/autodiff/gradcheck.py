"""Central finite differences, the independent oracle for backward rules."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from declml.autodiff.tensor import Tensor


def numerical_gradient(
    fn: Callable[[], float], tensors: Sequence[Tensor], h: float = 1e-3, order: int = 4
) -> list[np.ndarray]:
    """Estimate d fn / d t for each tensor by perturbing its data in place.

    ``fn`` must read the tensors' current data and return a float. ``order``
    selects the central stencil: 2 is the classic ``(f(x+h) - f(x-h)) / 2h``,
    4 adds the ``x +- 2h`` points and cancels the O(h^2) truncation term.
    Quotients are accumulated in float64 regardless of tensor dtype.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    out = []
    for t in tensors:
        flat = t.data.reshape(-1)
        g = np.zeros(flat.shape, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]

            def at(delta):
                flat[i] = orig + delta
                return float(fn())

            if order == 2:
                g[i] = (at(h) - at(-h)) / (2 * h)
            else:
                g[i] = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h)
            flat[i] = orig
        out.append(g.reshape(t.shape))
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Normwise relative error ``max|a - n| / max(max|n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n)) / max(float(np.max(np.abs(n))), floor))
