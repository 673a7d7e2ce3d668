"""
DFT1 tensor codec.

Layout: magic ``DFT1``, u8 dtype (0 = f32, 1 = f64), u8 ndim, ndim x u32 LE dims,
then the row-major little-endian payload.
"""

from pathlib import Path
from typing import Tuple, Union

import numpy as np

from tools.errors import DatasetError, ShapeError

MAGIC = b"DFT1"
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def encode_tensor(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.dtype not in _DTYPE_CODES:
        array = array.astype(np.float32)
    if array.ndim > 255:
        raise ShapeError(f"DFT1 supports at most 255 dims, got {array.ndim}")
    code = _DTYPE_CODES[array.dtype]
    header = MAGIC + bytes([code, array.ndim]) + np.asarray(array.shape, dtype="<u4").tobytes()
    payload = np.ascontiguousarray(array, dtype=_CODE_DTYPES[code]).tobytes()
    return header + payload


def decode_tensor(blob: bytes, offset: int = 0) -> Tuple[np.ndarray, int]:
    """Decode one tensor starting at ``offset``; returns (array, bytes consumed)."""
    view = memoryview(blob)
    if bytes(view[offset:offset + 4]) != MAGIC:
        raise DatasetError("not a DFT1 blob (bad magic)")
    code, ndim = view[offset + 4], view[offset + 5]
    if code not in _CODE_DTYPES:
        raise DatasetError(f"unknown DFT1 dtype code {code}")
    dims_start = offset + 6
    dims_end = dims_start + 4 * ndim
    shape = tuple(int(d) for d in np.frombuffer(blob, dtype="<u4", count=ndim, offset=dims_start))
    dtype = _CODE_DTYPES[code]
    count = int(np.prod(shape)) if shape else 1
    payload_end = dims_end + count * dtype.itemsize
    if payload_end > len(blob):
        raise DatasetError(f"truncated DFT1 payload: need {payload_end - offset} bytes")
    array = np.frombuffer(blob, dtype=dtype, count=count, offset=dims_end).reshape(shape)
    return array.astype(dtype.newbyteorder("="), copy=True), payload_end - offset


def write_dft(path: Union[str, Path], array: np.ndarray) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_tensor(array))
    except OSError as exc:
        raise DatasetError(f"cannot write {path}: {exc}") from exc
    return path


def read_dft(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    array, _ = decode_tensor(blob)
    return array
