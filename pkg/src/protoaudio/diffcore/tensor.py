"""Dense tensors with an explicit reverse-mode tape.

Ops record onto the innermost active Tape (a `with Tape():` block). With no
tape active, or when no input carries gradient, ops run forward-only; frozen
parameters are shareable for concurrent inference while a training step owns
its tape exclusively.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Optional

import numpy as np

from ..errors import NonFiniteValueError, NonScalarLossError

_state = threading.local()


def _tape_stack() -> list:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = []
        _state.tapes = stack
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


_checked = False


def set_checked(flag: bool) -> None:
    """Toggle NaN/Inf screening of every op output (and backward gradients)."""
    global _checked
    _checked = bool(flag)


class checked_mode:
    """Context manager enabling checked mode within a block."""

    def __enter__(self):
        global _checked
        self._prev = _checked
        _checked = True
        return self

    def __exit__(self, *exc):
        global _checked
        _checked = self._prev
        return False


def guard_finite(data: np.ndarray, op_name: str) -> None:
    if _checked and not np.all(np.isfinite(data)):
        raise NonFiniteValueError(f"{op_name} produced non-finite values")


class Tensor:
    """Shape + row-major buffer; leaves may carry requires_grad."""

    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype == np.float16 or not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.tape = None  # set when an op on an active tape produced this tensor

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def parameter(data, dtype=np.float32) -> Tensor:
    """A learnable leaf."""
    return Tensor(np.array(data, dtype=dtype), requires_grad=True)


class Node:
    __slots__ = ("op_name", "inputs", "output", "backward_fn")

    def __init__(self, op_name: str, inputs: tuple, output: Tensor,
                 backward_fn: Callable[[np.ndarray], Iterable[Optional[np.ndarray]]]):
        self.op_name = op_name
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Append-only op record; node inputs always precede the node."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def record(self, op_name, inputs, output, backward_fn) -> None:
        output.requires_grad = True
        output.tape = self
        self.nodes.append(Node(op_name, tuple(inputs), output, backward_fn))

    def __len__(self):
        return len(self.nodes)


def backward(loss: Tensor) -> dict:
    """Reverse sweep from a scalar loss.

    Returns {leaf Tensor: gradient Tensor} for every requires_grad leaf the
    loss depends on, and sets each leaf's .grad. Gradients sum across fan-out.
    """
    if loss.size != 1:
        raise NonScalarLossError(f"loss must be scalar, got shape {loss.shape}")
    tape: Optional[Tape] = loss.tape
    if tape is None:
        return {}
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        input_grads = node.backward_fn(g)
        for tensor, ig in zip(node.inputs, input_grads):
            if ig is None or not tensor.requires_grad:
                continue
            guard_finite(ig, f"{node.op_name} backward")
            key = id(tensor)
            acc = grads.get(key)
            grads[key] = ig if acc is None else acc + ig
            if tensor.tape is None:
                leaves[key] = tensor
    result = {}
    for key, leaf in leaves.items():
        g = grads[key]
        if g.shape != leaf.data.shape:
            g = g.reshape(leaf.data.shape)
        leaf.grad = g
        result[leaf] = Tensor(g)
    return result
