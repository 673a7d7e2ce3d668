"""
Named learnable parameters with gradient slots, and the single-file container.

Container layout: one line of compact JSON (the index) terminated by ``\\n``,
followed by the concatenated DFT1 blobs. Index offsets are relative to the first
byte after the newline.
"""

import json
import logging
import threading
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from tensor_core.dft_io import decode_tensor, encode_tensor
from tensor_core.tensor import Tape, Tensor
from tools.errors import CheckpointError, ShapeError

logger = logging.getLogger(__name__)

_DTYPE_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


class Parameter:
    __slots__ = ("value", "grad")

    def __init__(self, value: Tensor):
        self.value = value
        self.grad = np.zeros(value.shape, dtype=value.dtype)


class ParamStore:
    """Map of parameter name -> (value, grad).

    Values are immutable tensors, so readers never need the lock; writers
    (``set_value``, gradient accumulation) take it.
    """

    def __init__(self):
        self._params: Dict[str, Parameter] = {}
        self._lock = threading.RLock()

    # ------------------------------------------------------------ access
    def add(self, name: str, value) -> Tensor:
        with self._lock:
            if name in self._params:
                raise CheckpointError(f"parameter {name!r} already exists")
            dtype = value.dtype if isinstance(value, np.ndarray) and value.dtype in _DTYPE_NAMES else None
            tensor = Tensor(value, requires_grad=True, name=name, dtype=dtype)
            self._params[name] = Parameter(tensor)
            return tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name].value
        except KeyError:
            raise CheckpointError(f"missing parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())

    def names(self) -> List[str]:
        return list(self._params)

    def items(self) -> List[Tuple[str, Tensor]]:
        return [(name, p.value) for name, p in self._params.items()]

    def numel(self) -> int:
        return sum(p.value.size for p in self._params.values())

    def set_value(self, name: str, value: np.ndarray) -> Tensor:
        with self._lock:
            old = self[name]
            value = np.asarray(value)
            if value.shape != old.shape:
                raise ShapeError(f"parameter {name!r} has shape {old.shape}, got {value.shape}")
            tensor = Tensor(value, requires_grad=True, name=name, dtype=old.dtype)
            self._params[name].value = tensor
            return tensor

    # ------------------------------------------------------------ gradients
    def grad(self, name: str) -> np.ndarray:
        return self._params[name].grad

    def grads(self) -> Dict[str, np.ndarray]:
        return {name: p.grad for name, p in self._params.items()}

    def zero_grad(self) -> None:
        with self._lock:
            for p in self._params.values():
                p.grad = np.zeros(p.value.shape, dtype=p.value.dtype)

    def collect_grads(self, tape: Tape) -> Dict[str, np.ndarray]:
        """Gradients of the tape's last backward pass, keyed by parameter name."""
        return {name: tape.grad(p.value) for name, p in self._params.items()}

    def accumulate(self, grads: Dict[str, np.ndarray], scale: float = 1.0) -> None:
        with self._lock:
            for name, grad in grads.items():
                p = self._params[name]
                p.grad = p.grad + (np.asarray(grad, dtype=p.value.dtype) * scale)

    # ------------------------------------------------------------ copies
    def copy(self) -> "ParamStore":
        clone = ParamStore()
        for name, value in self.items():
            clone.add(name, value.data.copy())
        return clone

    def astype(self, dtype) -> "ParamStore":
        clone = ParamStore()
        for name, value in self.items():
            clone.add(name, value.data.astype(dtype))
        return clone

    def subset(self, names: List[str]) -> "ParamStore":
        clone = ParamStore()
        for name in names:
            clone.add(name, self[name].data.copy())
        return clone

    # ------------------------------------------------------------ persistence
    def to_bytes(self, meta: Optional[dict] = None) -> bytes:
        index = {"tensors": {}, "meta": meta or {}}
        blobs = []
        offset = 0
        for name, value in self.items():
            blob = encode_tensor(value.data)
            index["tensors"][name] = {
                "offset": offset,
                "shape": list(value.shape),
                "dtype": _DTYPE_NAMES[value.dtype],
            }
            blobs.append(blob)
            offset += len(blob)
        header = json.dumps(index, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return header + b"\n" + b"".join(blobs)

    @classmethod
    def from_bytes(cls, blob: bytes) -> Tuple["ParamStore", dict]:
        newline = blob.find(b"\n")
        if newline < 0:
            raise CheckpointError("parameter container has no index line")
        try:
            index = json.loads(blob[:newline].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"unreadable parameter index: {exc}") from exc
        base = newline + 1
        store = cls()
        for name, entry in index.get("tensors", {}).items():
            array, _ = decode_tensor(blob, base + int(entry["offset"]))
            if list(array.shape) != list(entry["shape"]):
                raise CheckpointError(f"parameter {name!r} shape mismatch in container")
            store.add(name, array)
        return store, index.get("meta", {})

    def save(self, path: Union[str, Path], meta: Optional[dict] = None) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(self.to_bytes(meta))
        except OSError as exc:
            raise CheckpointError(f"cannot write {path}: {exc}") from exc
        logger.info("Saved %d parameters (%d scalars) to %s", len(self), self.numel(), path)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> Tuple["ParamStore", dict]:
        path = Path(path)
        try:
            blob = path.read_bytes()
        except OSError as exc:
            raise CheckpointError(f"cannot read {path}: {exc}") from exc
        return cls.from_bytes(blob)
