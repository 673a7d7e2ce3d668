"""
Dense tensors and the define-by-run tape.

Tensors wrap a read-only, contiguous numpy array. Ops record themselves on the
tape that is active in the current thread; ``Tape.backward`` walks the record in
reverse creation order and accumulates one gradient per tensor id.
"""

import itertools
import logging
import threading
from contextlib import contextmanager
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from tools.errors import NonFiniteError, ShapeError

logger = logging.getLogger(__name__)


class Precision(str, Enum):
    """Floating point precision of newly created tensors"""
    F32 = "f32"
    F64 = "f64"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32) if self is Precision.F32 else np.dtype(np.float64)


_precision = Precision.F32
_ids = itertools.count()
_local = threading.local()


def get_precision() -> Precision:
    return _precision


def set_precision(value) -> Precision:
    """Set the process-wide precision; returns the previous one."""
    global _precision
    previous = _precision
    _precision = Precision(value)
    return previous


@contextmanager
def precision(value) -> Iterator[Precision]:
    previous = set_precision(value)
    try:
        yield _precision
    finally:
        set_precision(previous)


def current_dtype() -> np.dtype:
    return _precision.dtype


class Tensor:
    """Immutable n-dimensional array that may take part in a gradient tape"""

    __slots__ = ("data", "requires_grad", "tensor_id", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        array = np.array(data, dtype=dtype or current_dtype(), copy=True, order="C")
        if not np.all(np.isfinite(array)):
            label = name or "tensor"
            raise NonFiniteError(f"{label} of shape {array.shape} holds NaN or Inf values")
        array.setflags(write=False)
        self.data = array
        self.requires_grad = requires_grad
        self.tensor_id = next(_ids)
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class _Node:
    __slots__ = ("output", "inputs", "backward", "op_name")

    def __init__(self, output: Tensor, inputs: Tuple[Tensor, ...], backward: BackwardFn, op_name: str):
        self.output = output
        self.inputs = inputs
        self.backward = backward
        self.op_name = op_name


class Tape:
    """Ordered record of primitive ops for one forward pass.

    A tape is confined to the thread that entered it. Use as a context manager;
    ops executed inside the block are recorded when any input requires grad.
    """

    def __init__(self):
        self._nodes: List[_Node] = []
        self.grads: Dict[int, np.ndarray] = {}

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def op_names(self) -> List[str]:
        return [node.op_name for node in self._nodes]

    def record(self, output: Tensor, inputs: Tuple[Tensor, ...], backward: BackwardFn, op_name: str) -> None:
        self._nodes.append(_Node(output, inputs, backward, op_name))

    def backward(self, loss: Tensor) -> Dict[int, np.ndarray]:
        """Accumulate d(loss)/d(tensor) for every tensor reachable on this tape."""
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: Dict[int, np.ndarray] = {loss.tensor_id: np.ones(loss.shape, dtype=loss.dtype)}

        for node in reversed(self._nodes):
            upstream = grads.get(node.output.tensor_id)
            if upstream is None:
                continue
            input_grads = node.backward(upstream)
            for tensor, grad in zip(node.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                grad = np.asarray(grad, dtype=tensor.dtype)
                if grad.shape != tensor.shape:
                    raise ShapeError(
                        f"{node.op_name} produced gradient of shape {grad.shape} "
                        f"for input of shape {tensor.shape}"
                    )
                if tensor.tensor_id in grads:
                    grads[tensor.tensor_id] = grads[tensor.tensor_id] + grad
                else:
                    grads[tensor.tensor_id] = grad

        self.grads = grads
        return grads

    def grad(self, tensor: Tensor) -> np.ndarray:
        """Gradient of the last backward pass w.r.t. ``tensor`` (zeros if unreached)."""
        grad = self.grads.get(tensor.tensor_id)
        if grad is None:
            return np.zeros(tensor.shape, dtype=tensor.dtype)
        return grad


def _tape_stack() -> List[Tape]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def active_tape() -> Optional[Tape]:
    stack = _tape_stack()
    return stack[-1] if stack else None


def record(output: Tensor, inputs: Sequence[Tensor], backward: BackwardFn, op_name: str) -> Tensor:
    """Attach ``output`` to the active tape if any input requires grad."""
    inputs = tuple(inputs)
    if any(t.requires_grad for t in inputs):
        output.requires_grad = True
        tape = active_tape()
        if tape is not None:
            tape.record(output, inputs, backward, op_name)
    return output
