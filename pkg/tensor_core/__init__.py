"""
Minimal tensor library: dense tensors, a reverse-mode tape, the op set of the
fusion graph and losses, parameter storage and gradient checking.
"""

from tensor_core.tensor import (
    Precision,
    Tape,
    Tensor,
    current_dtype,
    get_precision,
    precision,
    set_precision,
)
from tensor_core.params import ParamStore
from tensor_core.grad_check import GradCheckReport, grad_check

__all__ = [
    'Precision',
    'Tape',
    'Tensor',
    'current_dtype',
    'get_precision',
    'precision',
    'set_precision',
    'ParamStore',
    'GradCheckReport',
    'grad_check',
]
