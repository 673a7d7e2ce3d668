"""
Adam over a ParamStore.
"""

import logging
from typing import Dict, Optional

import numpy as np

from tensor_core.params import ParamStore
from tools.config import OptimizerConfig

logger = logging.getLogger(__name__)


class Adam:
    """Adam with bias-corrected moments; moments are kept in float64.

    Args:
        config: learning-rate schedule, betas and eps
    """

    def __init__(self, config: Optional[OptimizerConfig] = None):
        self.config = config or OptimizerConfig()
        self.beta1, self.beta2 = self.config.betas
        self.eps = self.config.eps
        self.step_count = 0
        self.exp_avg: Dict[str, np.ndarray] = {}
        self.exp_avg_sq: Dict[str, np.ndarray] = {}

    def lr_at(self, epoch: int) -> float:
        return self.config.lr_at(epoch)

    def step(self, params: ParamStore, lr: float) -> None:
        """Apply one update from the gradients accumulated in ``params``."""
        self.step_count += 1
        correction1 = 1.0 - self.beta1 ** self.step_count
        correction2 = 1.0 - self.beta2 ** self.step_count
        for name, value in params.items():
            grad = params.grad(name).astype(np.float64)
            if name not in self.exp_avg:
                self.exp_avg[name] = np.zeros(value.shape)
                self.exp_avg_sq[name] = np.zeros(value.shape)
            m = self.exp_avg[name] = self.beta1 * self.exp_avg[name] + (1.0 - self.beta1) * grad
            v = self.exp_avg_sq[name] = self.beta2 * self.exp_avg_sq[name] + (1.0 - self.beta2) * grad * grad
            if lr == 0.0:
                continue
            update = lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            params.set_value(name, (value.data - update).astype(value.dtype))
        logger.debug("Adam step %d at lr %.2e", self.step_count, lr)
