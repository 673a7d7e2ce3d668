"""
Differentiable primitives used by the fusion graph and the losses.

Layout conventions: images and feature maps are (H, W, C); conv kernels are
(k, k, C_in, C_out); convolution follows the cross-correlation convention.
"""

from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tensor_core.tensor import BackwardFn, Tensor, record
from tools.errors import ShapeError

Scalar = Union[int, float]


def as_tensor(value) -> Tensor:
    """Wrap constants; tensors pass through unchanged."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def make_op(value: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn, op_name: str) -> Tensor:
    """Build a tensor from ``value`` and record it with a custom backward."""
    return record(Tensor(value, name=op_name), inputs, backward, op_name)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------- linear algebra

def op_matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    a_data, b_data = a.data, b.data

    def backward(grad):
        return grad @ b_data.T, a_data.T @ grad

    return make_op(a_data @ b_data, (a, b), backward, "matmul")


def op_transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose needs a 2-D tensor, got {a.shape}")
    return make_op(a.data.T, (a,), lambda grad: (grad.T,), "transpose")


def op_reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"cannot reshape {a.shape} into {shape}")
    original = a.shape
    return make_op(a.data.reshape(shape), (a,), lambda grad: (grad.reshape(original),), "reshape")


# ---------------------------------------------------------------- softmax

def _softmax_last_axis(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_backward(s: np.ndarray):
    def backward(grad):
        return (s * (grad - (grad * s).sum(axis=-1, keepdims=True)),)
    return backward


def op_row_softmax(x: Tensor) -> Tensor:
    """Softmax over each row of a 2-D tensor, stabilized by the row max."""
    if x.ndim != 2:
        raise ShapeError(f"row softmax needs a 2-D tensor, got {x.shape}")
    s = _softmax_last_axis(x.data)
    return make_op(s, (x,), _softmax_backward(s), "row_softmax")


def op_channel_softmax(x: Tensor) -> Tensor:
    """Softmax over the last (channel) axis of a tensor of any rank."""
    s = _softmax_last_axis(x.data)
    return make_op(s, (x,), _softmax_backward(s), "channel_softmax")


# ---------------------------------------------------------------- convolution

def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def op_conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: Optional[int] = None,
) -> Tensor:
    """2-D cross-correlation of an (H, W, C_in) map with a (k, k, C_in, C_out) kernel.

    ``padding=None`` means "same" padding (k // 2), which keeps the spatial size at
    stride 1.
    """
    if x.ndim != 3:
        raise ShapeError(f"conv2d input must be (H, W, C), got {x.shape}")
    if kernel.ndim != 4 or kernel.shape[0] != kernel.shape[1]:
        raise ShapeError(f"conv2d kernel must be (k, k, C_in, C_out), got {kernel.shape}")
    k, _, c_in, c_out = kernel.shape
    if k % 2 == 0:
        raise ShapeError(f"conv2d kernel size must be odd, got {k}")
    if c_in != x.shape[2]:
        raise ShapeError(f"conv2d kernel expects {c_in} channels, input has {x.shape[2]}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv2d bias must have shape ({c_out},), got {bias.shape}")
    if stride < 1:
        raise ShapeError(f"conv2d stride must be >= 1, got {stride}")
    pad = k // 2 if padding is None else int(padding)
    h, w, _ = x.shape
    h_out = conv_output_size(h, k, stride, pad)
    w_out = conv_output_size(w, k, stride, pad)
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"conv2d output would be {h_out}x{w_out} for input {h}x{w}, kernel {k}, stride {stride}")

    padded = np.pad(x.data, ((pad, pad), (pad, pad), (0, 0)))
    windows = sliding_window_view(padded, (k, k), axis=(0, 1))[::stride, ::stride][:h_out, :w_out]
    # windows: (h_out, w_out, C_in, k, k) -> columns ordered (ki, kj, c)
    cols = np.ascontiguousarray(windows.transpose(0, 1, 3, 4, 2)).reshape(h_out * w_out, k * k * c_in)
    weights = kernel.data.reshape(k * k * c_in, c_out)
    out = cols @ weights
    if bias is not None:
        out = out + bias.data
    out = out.reshape(h_out, w_out, c_out)
    padded_shape = padded.shape

    def backward(grad):
        grad2 = grad.reshape(h_out * w_out, c_out)
        grad_kernel = (cols.T @ grad2).reshape(kernel.shape)
        grad_bias = grad2.sum(axis=0) if bias is not None else None
        grad_cols = (grad2 @ weights.T).reshape(h_out, w_out, k, k, c_in)
        grad_padded = np.zeros(padded_shape, dtype=grad.dtype)
        row_end = stride * (h_out - 1) + 1
        col_end = stride * (w_out - 1) + 1
        for i in range(k):
            for j in range(k):
                grad_padded[i:i + row_end:stride, j:j + col_end:stride, :] += grad_cols[:, :, i, j, :]
        grad_x = grad_padded[pad:pad + h, pad:pad + w, :]
        return grad_x, grad_kernel, grad_bias

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return make_op(out, inputs, backward, "conv2d")


# ---------------------------------------------------------------- resampling

def bilinear_matrix(size: int, factor: int, dtype=np.float64) -> np.ndarray:
    """(size*factor, size) interpolation matrix, align-corners-false convention."""
    out_size = size * factor
    src = (np.arange(out_size, dtype=np.float64) + 0.5) / factor - 0.5
    src = np.clip(src, 0.0, None)
    lo = np.minimum(np.floor(src).astype(np.int64), size - 1)
    hi = np.minimum(lo + 1, size - 1)
    frac = src - lo
    matrix = np.zeros((out_size, size), dtype=np.float64)
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, lo), 1.0 - frac)
    np.add.at(matrix, (rows, hi), frac)
    return matrix.astype(dtype)


def op_bilinear_upsample(x: Tensor, factor: int) -> Tensor:
    if factor < 1:
        raise ShapeError(f"upsample factor must be >= 1, got {factor}")
    if x.ndim != 3:
        raise ShapeError(f"upsample input must be (H, W, C), got {x.shape}")
    if factor == 1:
        return make_op(x.data, (x,), lambda grad: (grad,), "bilinear_upsample")
    h, w, _ = x.shape
    rows = bilinear_matrix(h, factor, x.dtype)
    cols = bilinear_matrix(w, factor, x.dtype)
    out = np.einsum("Yy,Xx,yxc->YXc", rows, cols, x.data, optimize=True)

    def backward(grad):
        return (np.einsum("Yy,Xx,YXc->yxc", rows, cols, grad, optimize=True),)

    return make_op(out, (x,), backward, "bilinear_upsample")


# ---------------------------------------------------------------- structure

def op_concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    lead = tensors[0].shape[:-1]
    for t in tensors:
        if t.shape[:-1] != lead:
            raise ShapeError(f"concat leading dims differ: {lead} vs {t.shape[:-1]}")
    splits = np.cumsum([t.shape[-1] for t in tensors])[:-1]

    def backward(grad):
        return tuple(np.split(grad, splits, axis=-1))

    return make_op(np.concatenate([t.data for t in tensors], axis=-1), tensors, backward, "concat_channels")


def op_gather(x: Tensor, indices: np.ndarray) -> Tensor:
    """Select entries of the flattened tensor; result has the shape of ``indices``."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= x.size):
        raise ShapeError(f"gather index out of range for tensor of size {x.size}")
    shape = x.shape

    def backward(grad):
        flat = np.zeros(int(np.prod(shape)), dtype=grad.dtype)
        np.add.at(flat, indices.reshape(-1), grad.reshape(-1))
        return (flat.reshape(shape),)

    return make_op(x.data.reshape(-1)[indices], (x,), backward, "gather")


# ---------------------------------------------------------------- elementwise

def op_add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    a_shape, b_shape = a.shape, b.shape

    def backward(grad):
        return _unbroadcast(grad, a_shape), _unbroadcast(grad, b_shape)

    return make_op(a.data + b.data, (a, b), backward, "add")


def op_sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    a_shape, b_shape = a.shape, b.shape

    def backward(grad):
        return _unbroadcast(grad, a_shape), _unbroadcast(-grad, b_shape)

    return make_op(a.data - b.data, (a, b), backward, "sub")


def op_mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    a_data, b_data = a.data, b.data

    def backward(grad):
        return _unbroadcast(grad * b_data, a_data.shape), _unbroadcast(grad * a_data, b_data.shape)

    return make_op(a_data * b_data, (a, b), backward, "mul")


def op_scale(x: Tensor, factor: Scalar) -> Tensor:
    factor = float(factor)
    return make_op(x.data * factor, (x,), lambda grad: (grad * factor,), "scale")


def op_relu(x: Tensor) -> Tensor:
    positive = x.data > 0
    return make_op(np.where(positive, x.data, 0.0), (x,), lambda grad: (grad * positive,), "relu")


def op_log(x: Tensor) -> Tensor:
    x_data = x.data
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.log(x_data)
    return make_op(value, (x,), lambda grad: (grad / x_data,), "log")


def op_sqrt(x: Tensor) -> Tensor:
    """Square root; the gradient at 0 is taken as 0."""
    with np.errstate(invalid="ignore"):
        root = np.sqrt(x.data)

    def backward(grad):
        safe = np.where(root > 0, root, 1.0)
        return (np.where(root > 0, grad * 0.5 / safe, 0.0),)

    return make_op(root, (x,), backward, "sqrt")


def op_abs(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return make_op(np.abs(x.data), (x,), lambda grad: (grad * sign,), "abs")


def op_reciprocal(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore"):
        value = 1.0 / x.data
    return make_op(value, (x,), lambda grad: (-grad * value * value,), "reciprocal")


# ---------------------------------------------------------------- reductions

def op_sum(x: Tensor, axis: Optional[int] = None) -> Tensor:
    shape = x.shape

    def backward(grad):
        if axis is None:
            return (np.broadcast_to(grad, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(grad, axis), shape).copy(),)

    return make_op(x.data.sum(axis=axis), (x,), backward, "sum")


def op_mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    return op_scale(op_sum(x, axis=axis), 1.0 / count)
