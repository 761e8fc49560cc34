"""Dense tensors, trainable parameters and the recording tape."""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from declml.errors import NotScalar

_FLOAT_DTYPE: contextvars.ContextVar[np.dtype] = contextvars.ContextVar(
    "declml_float_dtype", default=np.dtype(np.float32)
)
_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "declml_active_tape", default=None
)


def float_dtype() -> np.dtype:
    """Floating dtype used for newly created tensors in the current context."""
    return _FLOAT_DTYPE.get()


@contextlib.contextmanager
def check_mode():
    """Run in 64-bit precision; used only to verify gradients."""
    token = _FLOAT_DTYPE.set(np.dtype(np.float64))
    try:
        yield
    finally:
        _FLOAT_DTYPE.reset(token)


class Tensor:
    """A dense row-major array, optionally tracked for differentiation.

    Floating data is cast to the context's float dtype (32-bit unless inside
    :func:`check_mode`). Integer data (indices, targets) is stored as int64.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype.kind in "iub":
            arr = np.ascontiguousarray(arr, dtype=np.int64)
        else:
            arr = np.ascontiguousarray(arr, dtype=float_dtype())
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @classmethod
    def wrap(cls, arr: np.ndarray) -> "Tensor":
        """Wrap a computed array as-is (no dtype cast, no copy)."""
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t.requires_grad = False
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"

    def __add__(self, other: "Tensor") -> "Tensor":
        from declml.autodiff import ops

        return ops.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from declml.autodiff import ops

        return ops.sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from declml.autodiff import ops

        return ops.mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from declml.autodiff import ops

        return ops.matmul(self, other)


class Parameter(Tensor):
    """A trainable tensor with a stable, model-unique name."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass(slots=True)
class Record:
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward: BackwardFn
    op: str


class Tape:
    """Ordered log of primitive executions.

    Used as a context manager; every primitive run while the tape is active and
    touching a tensor that requires gradients is appended in execution order,
    which is a topological order by construction.
    """

    def __init__(self) -> None:
        self.records: list[Record] = []
        self._token: contextvars.Token | None = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)


def record(op: str, output: Tensor, inputs: Iterable[Tensor], backward: BackwardFn) -> Tensor:
    """Attach ``output`` to the active tape if any input needs a gradient."""
    inputs = tuple(inputs)
    tape = _ACTIVE_TAPE.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        tape.records.append(Record(output, inputs, backward, op))
    return output


def _sweep(loss: Tensor, tape: Tape) -> dict[int, np.ndarray]:
    if loss.data.shape != ():
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
    for rec in reversed(tape.records):
        g_out = grads.pop(id(rec.output), None)
        if g_out is None:
            continue
        for inp, g in zip(rec.inputs, rec.backward(g_out)):
            if g is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
    return grads


def gradients(loss: Tensor, tape: Tape, tensors: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of ``loss`` w.r.t. arbitrary leaf tensors (zeros if unused)."""
    grads = _sweep(loss, tape)
    return [
        np.zeros_like(t.data) if id(t) not in grads else np.asarray(grads[id(t)], dtype=t.dtype).reshape(t.shape)
        for t in tensors
    ]


def backward(loss: Tensor, tape: Tape, params: Iterable[Parameter] = ()) -> dict[str, np.ndarray]:
    """Reverse sweep over ``tape`` seeded with d(loss)/d(loss) = 1.

    Fills ``p.grad`` for every parameter in ``params`` (zeros when the
    parameter is not on any path to ``loss``) and returns them keyed by name.
    """
    params = list(params)
    out: dict[str, np.ndarray] = {}
    for p, g in zip(params, gradients(loss, tape, params)):
        p.grad = g
        out[p.name] = g
    return out
