"""Dense float64 tensors plus a recording tape for reverse-mode gradients.

The tape records each differentiable op in forward order together with a
closure that scatters the output gradient back onto the inputs.  Forward
order is a topological order of the graph, so ``backward`` simply replays
the recording in reverse.  Parameters are registered on the tape by name;
their gradients accumulate across ``backward`` calls until ``zero_grad``,
which is what makes gradient accumulation over micro-batches work.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import DimensionError

# Cumulative bytes handed to tensor payloads since the last reset.  The
# benchmark harness reads this as a portable stand-in for resident memory.
_arena_bytes = 0


def arena_reset() -> None:
    global _arena_bytes
    _arena_bytes = 0


def arena_bytes() -> int:
    return _arena_bytes


class Tensor:
    """A shaped block of float64 values with an optional gradient."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        global _arena_bytes
        _arena_bytes += arr.nbytes

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return self.data.item()

    def add_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def grad_or_zeros(self) -> np.ndarray:
        return self.grad if self.grad is not None else np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class GradTape:
    """Op recording plus the parameter registry for one trainable model."""

    def __init__(self):
        self._ops: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []
        self.params: dict[str, Tensor] = {}

    def parameter(self, name: str, value) -> Tensor:
        if name in self.params:
            raise DimensionError(f"parameter {name!r} registered twice")
        t = as_tensor(value)
        t.grad = np.zeros_like(t.data)
        self.params[name] = t
        return t

    def record(self, out: Tensor, backward: Callable[[np.ndarray], None]) -> None:
        self._ops.append((out, backward))

    def backward(self, loss: Tensor) -> None:
        """Propagate d(loss)/d(input) through everything recorded so far.

        Consumes the recording; parameter gradients accumulate until
        ``zero_grad``.
        """
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(self._ops):
            if out.grad is not None:
                fn(out.grad)
        self._ops.clear()

    def zero_grad(self) -> None:
        for t in self.params.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            else:
                t.grad.fill(0.0)
        self._ops.clear()

    def grad_of(self, name: str) -> np.ndarray:
        return self.params[name].grad_or_zeros()
