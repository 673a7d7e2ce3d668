"""
Training objectives: scale-invariant log loss, virtual normal loss, their
weighted sum and the two-term final objective.

All losses take the prediction as a Tensor (so gradients flow back through the
fusion graph) and the ground truth / masks as plain numpy arrays.
"""

import logging
import math
from typing import NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from tensor_core.ops import (
    op_abs,
    op_add,
    op_gather,
    op_log,
    op_matmul,
    op_mean,
    op_mul,
    op_reciprocal,
    op_relu,
    op_reshape,
    op_scale,
    op_sqrt,
    op_sub,
    op_sum,
)
from tensor_core.tensor import Tensor
from tools.errors import LossError
from tools.geometry import Intrinsics, backproject

logger = logging.getLogger(__name__)

VNL_MIN_SAMPLES = 1000
VNL_VALID_FRACTION = 0.05
REJECTION_WARN_FRACTION = 0.5

# (a @ _ROLL_1)[:, i] = a[:, (i + 1) % 3]; (a @ _ROLL_2)[:, i] = a[:, (i + 2) % 3]
_ROLL_1 = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
_ROLL_2 = _ROLL_1.T.copy()


class LossConfig(BaseModel):
    """Weights and sampling budget of the depth losses"""
    beta: float = Field(4.0, gt=0)
    lambda_si: float = Field(0.85, gt=0, le=1)
    alpha_si: float = Field(10.0, gt=0)
    # None: max(1000, 5% of valid pixels); 0 disables the VNL term
    vnl_samples: Optional[int] = Field(None, ge=0)
    vnl_min_dist: float = Field(3.0, ge=0)
    vnl_min_angle: float = Field(15.0, ge=0, lt=60)
    valid_range: Tuple[float, float] = (1e-3, 80.0)

    @model_validator(mode="after")
    def _range_order(self):
        low, high = self.valid_range
        if not (0 <= low < high):
            raise ValueError(f"valid_range must satisfy 0 <= min < max, got {self.valid_range}")
        return self

    def triplet_budget(self, valid_pixels: int) -> int:
        if self.vnl_samples is not None:
            return self.vnl_samples
        return max(VNL_MIN_SAMPLES, int(math.ceil(VNL_VALID_FRACTION * valid_pixels)))


class LossTerms(NamedTuple):
    total: Tensor
    si: Tensor
    vnl: Optional[Tensor]


class FinalLoss(NamedTuple):
    total: Tensor
    mono_term: float
    final_term: Tensor
    terms: LossTerms


def effective_mask(gt: np.ndarray, mask: Optional[np.ndarray], cfg: LossConfig) -> np.ndarray:
    """Supervised pixels: the caller's mask restricted to GT inside ``valid_range``."""
    gt = np.asarray(gt)
    low, high = cfg.valid_range
    in_range = np.isfinite(gt) & (gt > low) & (gt <= high)
    if mask is None:
        return in_range
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != gt.shape:
        raise LossError(f"mask shape {mask.shape} does not match depth shape {gt.shape}")
    return mask & in_range


def _check_inputs(pred: Tensor, gt: np.ndarray, mask: np.ndarray) -> np.ndarray:
    if pred.shape != gt.shape:
        raise LossError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise LossError("loss mask selects no pixels")
    if np.any(pred.data[mask] <= 0) or np.any(gt[mask] <= 0):
        raise LossError("depth must be positive on every masked pixel")
    return np.flatnonzero(mask)


def si_loss(pred: Tensor, gt: np.ndarray, valid_mask: np.ndarray, cfg: LossConfig) -> Tensor:
    """alpha * sqrt(mean(g^2) - lambda * mean(g)^2) with g = log pred - log gt."""
    gt = np.asarray(gt, dtype=np.float64)
    index = _check_inputs(pred, gt, valid_mask)
    picked = op_gather(op_reshape(pred, (pred.size,)), index)
    g = op_sub(op_log(picked), Tensor(np.log(gt.reshape(-1)[index])))
    mean_sq = op_mean(op_mul(g, g))
    mean_g = op_mean(g)
    variance = op_sub(mean_sq, op_scale(op_mul(mean_g, mean_g), cfg.lambda_si))
    # relu absorbs round-off below zero when lambda = 1
    return op_scale(op_sqrt(op_relu(variance)), cfg.alpha_si)


# ---------------------------------------------------------------- virtual normals

class TripletSample(NamedTuple):
    pixels: np.ndarray     # (A, 3) flat pixel indices
    rays: np.ndarray       # (A, 3, 3) K^-1 [u, v, 1] per vertex
    gt_normals: np.ndarray # (A, 3) unit, z >= 0
    drawn: int


def _triangle_angles(points: np.ndarray) -> np.ndarray:
    """Interior angles (degrees) of (A, 3, 3) triangles, one column per vertex."""
    angles = []
    for i in range(3):
        a = points[:, (i + 1) % 3] - points[:, i]
        b = points[:, (i + 2) % 3] - points[:, i]
        denom = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cosine = np.clip(np.sum(a * b, axis=1) / denom, -1.0, 1.0)
        angles.append(np.where(denom > 0, np.degrees(np.arccos(cosine)), 0.0))
    return np.stack(angles, axis=1)


def _orient(normals: np.ndarray) -> np.ndarray:
    return np.where(normals[:, 2:3] < 0, -1.0, 1.0)


def sample_triplets(
    gt: np.ndarray,
    K: Intrinsics,
    valid_mask: np.ndarray,
    cfg: LossConfig,
    rng_seed: int,
) -> TripletSample:
    """Draw pixel triplets from the mask and keep the non-degenerate ones.

    Sampling uses a counter-based (Philox) generator keyed by ``rng_seed`` so the
    draw does not depend on call order or worker scheduling.
    """
    height, width = gt.shape
    candidates = np.flatnonzero(valid_mask)
    drawn = cfg.triplet_budget(candidates.size)
    rng = np.random.Generator(np.random.Philox(key=int(rng_seed)))
    pixels = candidates[rng.integers(0, candidates.size, size=(drawn, 3))]

    v, u = np.divmod(pixels, width)
    coords = np.stack([u, v], axis=-1).astype(np.float64)
    gt_points = backproject((u, v), gt.reshape(-1)[pixels], K)

    image_dist = np.stack(
        [np.linalg.norm(coords[:, i] - coords[:, (i + 1) % 3], axis=1) for i in range(3)], axis=1
    )
    keep = np.all(image_dist >= max(cfg.vnl_min_dist, 1e-9), axis=1)
    keep &= np.all(_triangle_angles(gt_points) >= cfg.vnl_min_angle, axis=1)

    normals = np.cross(gt_points[:, 1] - gt_points[:, 0], gt_points[:, 2] - gt_points[:, 0])
    lengths = np.linalg.norm(normals, axis=1)
    keep &= lengths > 0
    if not keep.any():
        raise LossError(
            f"vnl_loss accepted 0 of {drawn} triplets from {candidates.size} valid pixels "
            f"(min_dist={cfg.vnl_min_dist}px, min_angle={cfg.vnl_min_angle}deg)"
        )
    rejected = 1.0 - keep.mean()
    if rejected > REJECTION_WARN_FRACTION:
        logger.warning("vnl_loss rejected %.0f%% of %d triplets", 100 * rejected, drawn)

    normals = normals[keep] / lengths[keep, None]
    rays = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u, dtype=np.float64)], axis=-1)
    return TripletSample(
        pixels=pixels[keep],
        rays=rays[keep],
        gt_normals=normals * _orient(normals),
        drawn=drawn,
    )


def _cross(a: Tensor, b: Tensor) -> Tensor:
    roll_1, roll_2 = Tensor(_ROLL_1), Tensor(_ROLL_2)
    return op_sub(
        op_mul(op_matmul(a, roll_1), op_matmul(b, roll_2)),
        op_mul(op_matmul(a, roll_2), op_matmul(b, roll_1)),
    )


def vnl_loss(
    pred: Tensor,
    gt: np.ndarray,
    K: Intrinsics,
    valid_mask: np.ndarray,
    cfg: LossConfig,
    rng_seed: int = 0,
) -> Tensor:
    """Mean absolute difference between predicted and GT virtual-plane unit normals.

    The mean runs over accepted triplets and the three normal components, which
    keeps the value in [0, 2].
    """
    gt = np.asarray(gt, dtype=np.float64)
    _check_inputs(pred, gt, valid_mask)
    sample = sample_triplets(gt, K, np.asarray(valid_mask, dtype=bool), cfg, rng_seed)

    flat = op_reshape(pred, (pred.size,))
    count = sample.pixels.shape[0]
    vertices = [
        op_mul(op_reshape(op_gather(flat, sample.pixels[:, j]), (count, 1)), Tensor(sample.rays[:, j]))
        for j in range(3)
    ]
    normal = _cross(op_sub(vertices[1], vertices[0]), op_sub(vertices[2], vertices[0]))
    length = op_sqrt(op_sum(op_mul(normal, normal), axis=1))
    if np.any(length.data <= 0):
        raise LossError("predicted depth collapses a sampled triplet onto a line")
    unit = op_mul(normal, op_reshape(op_reciprocal(length), (count, 1)))
    unit = op_mul(unit, Tensor(_orient(unit.data)))
    return op_mean(op_abs(op_sub(unit, Tensor(sample.gt_normals))))


# ---------------------------------------------------------------- combinations

def combined_loss_terms(
    pred: Tensor,
    gt: np.ndarray,
    K: Intrinsics,
    mask: Optional[np.ndarray],
    cfg: LossConfig,
    rng_seed: int = 0,
) -> LossTerms:
    """beta * L_SI + L_VNL, with both terms kept for logging."""
    valid = effective_mask(gt, mask, cfg)
    si = si_loss(pred, gt, valid, cfg)
    weighted = op_scale(si, cfg.beta)
    if cfg.vnl_samples == 0:
        return LossTerms(total=weighted, si=si, vnl=None)
    vnl = vnl_loss(pred, gt, K, valid, cfg, rng_seed)
    return LossTerms(total=op_add(weighted, vnl), si=si, vnl=vnl)


def combined_loss(pred, gt, K, mask, cfg: LossConfig, rng_seed: int = 0) -> Tensor:
    return combined_loss_terms(pred, gt, K, mask, cfg, rng_seed).total


def final_loss(
    d_mono: np.ndarray,
    d_t: Tensor,
    gt: np.ndarray,
    K: Intrinsics,
    mask: Optional[np.ndarray],
    cfg: LossConfig,
    rng_seed: int = 0,
) -> FinalLoss:
    """L(D_mono) + L(D_t).

    D_mono is a fixed input here, so its term is a constant diagnostic and the
    gradient of ``total`` equals that of the D_t term alone.
    """
    mono_term = combined_loss(Tensor(np.asarray(d_mono)), gt, K, mask, cfg, rng_seed).item()
    terms = combined_loss_terms(d_t, gt, K, mask, cfg, rng_seed)
    total = op_add(terms.total, mono_term)
    return FinalLoss(total=total, mono_term=mono_term, final_term=terms.total, terms=terms)
