"""
Gradient check of the whole fusion graph plus the training loss, for every variant.

Runs at a reduced size (16 x 24 pixels, at most 4 hypotheses) so central
differences over every parameter tensor finish in seconds.
"""

import logging
from typing import Dict, List, NamedTuple

import numpy as np

from tensor_core.grad_check import GradCheckReport, grad_check
from tensor_core.params import ParamStore
from tensor_core.tensor import Precision, Tensor, precision
from tools.config import RunConfig
from tools.fusion import FusionConfig, FusionVariant, init_fusion_params, predict_depth
from tools.geometry import HypothesisSet, Intrinsics, make_hypotheses
from tools.losses import combined_loss
from tools.volumes import depth_to_onehot

logger = logging.getLogger(__name__)

CHECK_HEIGHT = 16
CHECK_WIDTH = 24
CHECK_TOLERANCE = 1e-4
CHECK_STEP = 1e-5
CHECK_GAMMA = 0.5
CHECK_VNL_SAMPLES = 64


class GradCheckInputs(NamedTuple):
    c_multi: np.ndarray
    c_mono: np.ndarray
    image: np.ndarray
    gt_depth: np.ndarray
    intrinsics: Intrinsics
    hypotheses: HypothesisSet


def check_fusion_config(cfg: RunConfig, variant: FusionVariant) -> FusionConfig:
    return cfg.fusion.model_copy(
        update={
            "M": min(cfg.M, 4),
            "variant": variant,
            "downsample_factor": 4,
            "head_channels": 8,
            "context_channels": 4,
        }
    )


def make_inputs(cfg: RunConfig, M: int, seed: int = 0) -> GradCheckInputs:
    """Random cost volume, one-hot mono volume and a slanted-plane ground truth."""
    rng = np.random.default_rng(seed)
    h, w = CHECK_HEIGHT, CHECK_WIDTH
    hypotheses = make_hypotheses(cfg.d_min, cfg.d_max, M)
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    mid = np.sqrt(cfg.d_min * cfg.d_max)
    gt = mid * (1.0 + 0.02 * cols - 0.015 * rows) + 0.1 * np.sin(cols / 3.0)
    gt = np.clip(gt, cfg.d_min * 1.01, cfg.d_max * 0.99)
    mono = gt * np.exp(rng.normal(0.0, 0.1, size=gt.shape))
    return GradCheckInputs(
        c_multi=rng.uniform(-1.0, 1.0, size=(h, w, M)),
        c_mono=depth_to_onehot(np.clip(mono, cfg.d_min, cfg.d_max), hypotheses).data.astype(np.float64),
        image=rng.uniform(0.0, 1.0, size=(h, w, cfg.fusion.image_channels)),
        gt_depth=gt,
        intrinsics=Intrinsics(fx=20.0, fy=20.0, cx=11.5, cy=7.5, width=w, height=h),
        hypotheses=hypotheses,
    )


def check_variant(cfg: RunConfig, variant: FusionVariant, max_per_parameter: int = 12) -> GradCheckReport:
    fusion = check_fusion_config(cfg, variant)
    loss_cfg = cfg.loss.model_copy(update={"vnl_samples": CHECK_VNL_SAMPLES})
    with precision(Precision.F64):
        inputs = make_inputs(cfg, fusion.M, seed=cfg.seed)
        params = init_fusion_params(fusion, seed=cfg.seed, gamma=CHECK_GAMMA)

        def graph(store: ParamStore) -> Tensor:
            pred = predict_depth(
                inputs.c_multi, inputs.c_mono, inputs.image, inputs.hypotheses, store, fusion
            )
            return combined_loss(pred, inputs.gt_depth, inputs.intrinsics, None, loss_cfg, rng_seed=cfg.seed)

        report = grad_check(
            graph,
            params,
            tolerance=CHECK_TOLERANCE,
            step=CHECK_STEP,
            max_per_parameter=max_per_parameter,
            seed=cfg.seed,
        )
    logger.info("Variant %s: %s", variant.value, report.summary())
    return report


def run_gradcheck(cfg: RunConfig, variants: List[FusionVariant] = None) -> Dict[str, GradCheckReport]:
    """Gradient-check each variant; returns reports keyed by variant name."""
    variants = variants or list(FusionVariant)
    return {v.value: check_variant(cfg, v) for v in variants}
