"""
Depth evaluation: standard error metrics, overall vs. dynamic splits, dynamic-mask
estimation and error reduction against the monocular input.
"""

import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.ndimage import binary_opening

from tools.errors import MetricError
from tools.geometry import Intrinsics, Pose, warp_source_to_target
from tools.volumes import ssim_score

logger = logging.getLogger(__name__)

DEFAULT_RANGE = (0.0, 80.0)
ERROR_METRICS = ("abs_rel", "sq_rel", "rmse", "rmse_log")
ACCURACY_METRICS = ("delta1", "delta2", "delta3")
TABLE_COLUMNS = ERROR_METRICS + ACCURACY_METRICS

# photometric error = SSIM_WEIGHT * dissimilarity + (1 - SSIM_WEIGHT) * L1
SSIM_WEIGHT = 0.85
DEFAULT_TAU_PHOTO = 0.1
DEFAULT_TAU_DEPTH = 0.2


class MetricSet(BaseModel):
    """The seven depth metrics over one pixel selection"""
    abs_rel: float = Field(ge=0)
    sq_rel: float = Field(ge=0)
    rmse: float = Field(ge=0)
    rmse_log: float = Field(ge=0)
    delta1: float = Field(ge=0, le=1)
    delta2: float = Field(ge=0, le=1)
    delta3: float = Field(ge=0, le=1)
    n_valid: int = Field(ge=0)

    def values(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in TABLE_COLUMNS}


class MetricReport(BaseModel):
    """Overall and dynamic-area metrics for one predictor; ``dynamic`` is absent without movers"""
    name: str = "prediction"
    overall: MetricSet
    dynamic: Optional[MetricSet] = None
    scenes: int = 1

    def split(self, which: str) -> Optional[MetricSet]:
        if which not in ("overall", "dynamic"):
            raise MetricError(f"unknown split {which!r}")
        return getattr(self, which)

    def rows(self) -> List[dict]:
        """Flat records (one per split) for CSV output."""
        rows = []
        for which in ("overall", "dynamic"):
            metrics = self.split(which)
            if metrics is not None:
                rows.append({"predictor": self.name, "split": which, **metrics.model_dump()})
        return rows


def _selection(gt: np.ndarray, mask: Optional[np.ndarray], depth_range: Tuple[float, float]) -> np.ndarray:
    low, high = depth_range
    select = np.isfinite(gt) & (gt > low) & (gt <= high)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != gt.shape:
            raise MetricError(f"mask shape {mask.shape} does not match depth shape {gt.shape}")
        select &= mask
    return select


def compute_metrics(
    pred: np.ndarray,
    gt: np.ndarray,
    mask: Optional[np.ndarray] = None,
    depth_range: Tuple[float, float] = DEFAULT_RANGE,
) -> MetricSet:
    """AbsRel, SqRel, RMSE, RMSE_log and strict delta < 1.25^k over mask with gt in range."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    select = _selection(gt, mask, depth_range)
    if not select.any():
        raise MetricError("metric selection is empty (mask and depth range exclude every pixel)")
    p, g = pred[select], gt[select]
    if np.any(~np.isfinite(p)) or np.any(p <= 0):
        raise MetricError("prediction must be finite and positive on the evaluated pixels")

    diff = p - g
    ratio = np.maximum(p / g, g / p)
    return MetricSet(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff ** 2 / g)),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
        n_valid=int(select.sum()),
    )


def masked_eval(
    pred: np.ndarray,
    gt: np.ndarray,
    dynamic_mask: Optional[np.ndarray],
    depth_range: Tuple[float, float] = DEFAULT_RANGE,
    name: str = "prediction",
) -> MetricReport:
    overall = compute_metrics(pred, gt, None, depth_range)
    dynamic = None
    if dynamic_mask is not None and _selection(np.asarray(gt, dtype=np.float64), dynamic_mask, depth_range).any():
        dynamic = compute_metrics(pred, gt, dynamic_mask, depth_range)
    return MetricReport(name=name, overall=overall, dynamic=dynamic)


def _mean_set(sets: Sequence[MetricSet]) -> MetricSet:
    values = {name: float(np.mean([getattr(s, name) for s in sets])) for name in TABLE_COLUMNS}
    return MetricSet(**values, n_valid=sum(s.n_valid for s in sets))


def aggregate_reports(reports: Iterable[MetricReport], name: Optional[str] = None) -> MetricReport:
    """Per-image metrics averaged over scenes; the dynamic split averages scenes that have one."""
    reports = list(reports)
    if not reports:
        raise MetricError("no reports to aggregate")
    dynamic = [r.dynamic for r in reports if r.dynamic is not None]
    if not dynamic:
        logger.warning("No scene in %s has dynamic pixels; dynamic split omitted", name or reports[0].name)
    return MetricReport(
        name=name or reports[0].name,
        overall=_mean_set([r.overall for r in reports]),
        dynamic=_mean_set(dynamic) if dynamic else None,
        scenes=len(reports),
    )


# ---------------------------------------------------------------- dynamic masks

def photometric_error(target: np.ndarray, warped: np.ndarray, window: int = 3) -> np.ndarray:
    """Per-pixel SSIM dissimilarity blended with mean absolute difference."""
    l1 = np.abs(np.asarray(target, dtype=np.float64) - warped)
    l1 = l1.mean(axis=-1) if l1.ndim == 3 else l1
    return SSIM_WEIGHT * (1.0 - ssim_score(target, warped, window)) + (1.0 - SSIM_WEIGHT) * l1


def min_reprojection_error(
    target: np.ndarray,
    sources: Sequence[Tuple[np.ndarray, Pose]],
    K: Intrinsics,
    depth: np.ndarray,
) -> np.ndarray:
    """Per-pixel minimum photometric error over the sources that see the pixel.

    Taking the minimum lets a pixel occluded in one source be explained by the
    other. Pixels seen by no source get error 0.
    """
    best = np.full(target.shape[:2], np.inf)
    for image, pose in sources:
        warped, valid = warp_source_to_target(image, K, pose, depth)
        error = photometric_error(target, warped)
        best = np.where(valid > 0, np.minimum(best, error), best)
    return np.where(np.isfinite(best), best, 0.0)


def _open(mask: np.ndarray, size: int) -> np.ndarray:
    if size <= 1:
        return mask
    return binary_opening(mask, structure=np.ones((size, size), dtype=bool))


def estimate_dynamic_mask(
    target: np.ndarray,
    sources: Sequence[Tuple[np.ndarray, Pose]],
    K: Intrinsics,
    mono_depth: np.ndarray,
    multi_argmax_depth: np.ndarray,
    d_max: float,
    tau_photo: float = DEFAULT_TAU_PHOTO,
    tau_depth: float = DEFAULT_TAU_DEPTH,
    warp_depth: Optional[np.ndarray] = None,
    opening: int = 3,
) -> np.ndarray:
    """Moving-object mask from photometric error and mono/multi depth disagreement.

    ``warp_depth`` is the depth used for the photometric term (ground truth when
    available); it defaults to the monocular depth.
    """
    depth = mono_depth if warp_depth is None else warp_depth
    photo = min_reprojection_error(target, sources, K, depth) > tau_photo
    gap = np.abs(1.0 / np.asarray(mono_depth, dtype=np.float64) - 1.0 / np.asarray(multi_argmax_depth)) * d_max
    mask = _open(photo & (gap > tau_depth), opening)
    logger.debug("Estimated dynamic mask density %.4f", mask.mean())
    return mask


def gt_photometric_mask(
    target: np.ndarray,
    sources: Sequence[Tuple[np.ndarray, Pose]],
    K: Intrinsics,
    gt_depth: np.ndarray,
    tau_photo: float = DEFAULT_TAU_PHOTO,
    opening: int = 3,
) -> np.ndarray:
    """Dynamic mask from ground-truth-depth reprojection error alone."""
    return _open(min_reprojection_error(target, sources, K, gt_depth) > tau_photo, opening)


def mask_iou(estimated: np.ndarray, reference: np.ndarray) -> float:
    """Intersection over union; two empty masks agree perfectly."""
    estimated = np.asarray(estimated, dtype=bool)
    reference = np.asarray(reference, dtype=bool)
    union = np.logical_or(estimated, reference).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(estimated, reference).sum() / union)


# ---------------------------------------------------------------- error reduction

class ErrorReductionRow(BaseModel):
    metric: str
    mono_err: float
    final_err: float
    reduction_pct: Optional[float] = None

    def formatted(self) -> str:
        return "undefined" if self.reduction_pct is None else f"{self.reduction_pct:.2f}%"


class ErrorReductionReport(BaseModel):
    """Reduction of each error metric relative to the monocular input"""
    mono: str
    final: str
    split: str
    rows: List[ErrorReductionRow]

    def row(self, metric: str) -> ErrorReductionRow:
        for row in self.rows:
            if row.metric == metric:
                return row
        raise MetricError(f"no error-reduction row for {metric!r}")


def reduction_percent(mono_err: float, final_err: float) -> Optional[float]:
    if mono_err == 0:
        return None
    return 100.0 * (mono_err - final_err) / mono_err


def error_reduction_report(
    mono_metrics: MetricReport,
    final_metrics: MetricReport,
    split: str = "dynamic",
    metrics: Sequence[str] = ERROR_METRICS,
) -> ErrorReductionReport:
    """(mono - final) / mono for each error metric on one split."""
    mono_set = mono_metrics.split(split)
    final_set = final_metrics.split(split)
    if mono_set is None or final_set is None:
        raise MetricError(f"both reports need a {split} split for error reduction")
    rows = []
    for name in metrics:
        mono_err, final_err = getattr(mono_set, name), getattr(final_set, name)
        rows.append(
            ErrorReductionRow(
                metric=name,
                mono_err=mono_err,
                final_err=final_err,
                reduction_pct=reduction_percent(mono_err, final_err),
            )
        )
    return ErrorReductionReport(mono=mono_metrics.name, final=final_metrics.name, split=split, rows=rows)
