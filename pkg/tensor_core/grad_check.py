"""
Finite-difference verification of tape gradients.
"""

import logging
from typing import Callable, Dict, Optional

import numpy as np
from pydantic import BaseModel

from tensor_core.params import ParamStore
from tensor_core.tensor import Precision, Tape, Tensor, get_precision
from tools.errors import GradCheckError, NonFiniteError

logger = logging.getLogger(__name__)

GraphBuilder = Callable[[ParamStore], Tensor]


class GradCheckReport(BaseModel):
    """Outcome of comparing tape gradients against central differences"""
    max_rel_error: float
    tolerance: float
    passed: bool
    checked_scalars: int
    worst_parameter: Optional[str] = None
    per_parameter: Dict[str, float] = {}

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} max rel err {self.max_rel_error:.3e} (tol {self.tolerance:.1e}) "
            f"over {self.checked_scalars} scalars, worst: {self.worst_parameter}"
        )


def relative_error(analytic: float, numeric: float, floor: float = 1e-5) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _loss_value(graph_builder: GraphBuilder, params: ParamStore) -> float:
    try:
        loss = graph_builder(params)
    except NonFiniteError as exc:
        raise GradCheckError(f"loss is not finite: {exc}") from exc
    value = loss.item()
    if not np.isfinite(value):
        raise GradCheckError(f"loss is not finite: {value}")
    return value


def grad_check(
    graph_builder: GraphBuilder,
    params: ParamStore,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    max_per_parameter: int = 48,
    seed: int = 0,
) -> GradCheckReport:
    """Compare tape gradients with central differences for every parameter.

    Parameters larger than ``max_per_parameter`` scalars are subsampled with a
    seeded generator. ``params`` is restored to its original values on return.
    """
    if get_precision() is not Precision.F64:
        raise GradCheckError("grad_check needs 64-bit precision (set precision to f64)")
    for name, value in params.items():
        if value.dtype != np.float64:
            raise GradCheckError(f"parameter {name!r} is {value.dtype}, grad_check needs float64 values")

    with Tape() as tape:
        loss = graph_builder(params)
        if not np.isfinite(loss.item()):
            raise GradCheckError(f"loss is not finite: {loss.item()}")
        tape.backward(loss)
    analytic = params.collect_grads(tape)

    rng = np.random.default_rng(seed)
    per_parameter: Dict[str, float] = {}
    checked = 0
    for name in params.names():
        original = params[name].data.copy()
        flat_count = original.size
        if flat_count > max_per_parameter:
            picks = np.sort(rng.choice(flat_count, size=max_per_parameter, replace=False))
        else:
            picks = np.arange(flat_count)
        worst = 0.0
        try:
            for flat_index in picks:
                index = np.unravel_index(flat_index, original.shape) if original.shape else ()
                plus = original.copy()
                plus[index] += step
                params.set_value(name, plus)
                loss_plus = _loss_value(graph_builder, params)
                minus = original.copy()
                minus[index] -= step
                params.set_value(name, minus)
                loss_minus = _loss_value(graph_builder, params)
                numeric = (loss_plus - loss_minus) / (2.0 * step)
                worst = max(worst, relative_error(float(analytic[name][index]), numeric))
                checked += 1
        finally:
            params.set_value(name, original)
        per_parameter[name] = worst

    worst_name = max(per_parameter, key=per_parameter.get) if per_parameter else None
    max_error = per_parameter[worst_name] if worst_name else 0.0
    report = GradCheckReport(
        max_rel_error=max_error,
        tolerance=tolerance,
        passed=max_error < tolerance,
        checked_scalars=checked,
        worst_parameter=worst_name,
        per_parameter=per_parameter,
    )
    logger.info("grad_check: %s", report.summary())
    return report
