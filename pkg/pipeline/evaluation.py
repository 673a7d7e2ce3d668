"""
Evaluation runner: fused prediction, optional baseline checkpoints, monocular input
and pure-multi argmax on the overall and dynamic splits of a dataset, plus
dynamic-mask estimation quality.

Outputs in ``out_dir``:
  metrics.{json,csv,txt}       one report per predictor
  error_reduction.{txt,json}   reduction of each predictor's error vs. the mono input
  mask_iou.json                estimated / GT-photometric masks vs. rendered masks
  triptychs/<scene>.png        fused depth | error map | dynamic mask
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from pipeline.trainer import PreparedSample, prepare_dataset
from tensor_core.params import ParamStore
from tensor_core.tensor import precision
from tools.config import RunConfig
from tools.errors import CheckpointError, DatasetError, MetricError
from tools.evaluator import (
    ErrorReductionReport,
    MetricReport,
    aggregate_reports,
    error_reduction_report,
    estimate_dynamic_mask,
    gt_photometric_mask,
    mask_iou,
    masked_eval,
)
from tools.fusion import predict_depth
from tools.report_renderer import render_error_reduction, write_json, write_metric_files
from tools.visualizer_tool import write_triptych
from tools.volumes import volume_argmax_depth

logger = logging.getLogger(__name__)

MONO = "mono"
PURE_MULTI_ARGMAX = "pure_multi_argmax"

Baseline = Tuple[ParamStore, RunConfig]


class MaskScore(BaseModel):
    """Agreement of a mask estimator with the rendered dynamic masks"""
    name: str
    pooled_iou: float
    mean_iou: float
    scenes: int


class EvalResult(BaseModel):
    reports: List[MetricReport]
    reductions: List[ErrorReductionReport]
    masks: List[MaskScore]
    files: List[str] = []

    def report(self, name: str) -> MetricReport:
        for report in self.reports:
            if report.name == name:
                return report
        raise MetricError(f"no report named {name!r}")


def fused_name(cfg: RunConfig) -> str:
    return f"fused_{cfg.fusion.variant.value}"


def predict_sample(sample: PreparedSample, params: ParamStore, cfg: RunConfig) -> np.ndarray:
    """Forward pass without a tape; returns (H, W) float64 depth."""
    with precision(cfg.precision):
        depth = predict_depth(
            sample.volumes.c_multi,
            sample.volumes.c_mono,
            sample.image,
            cfg.hypotheses(),
            params,
            cfg.fusion,
        )
    return depth.data.astype(np.float64)


def sample_predictions(
    sample: PreparedSample,
    params: ParamStore,
    cfg: RunConfig,
    baselines: Sequence[Baseline] = (),
) -> Dict[str, np.ndarray]:
    predictions = {fused_name(cfg): predict_sample(sample, params, cfg)}
    for baseline_params, baseline_cfg in baselines:
        predictions[fused_name(baseline_cfg)] = predict_sample(sample, baseline_params, baseline_cfg)
    predictions[MONO] = sample.mono_depth
    predictions[PURE_MULTI_ARGMAX] = volume_argmax_depth(sample.volumes.c_multi)
    return predictions


def check_baselines(cfg: RunConfig, baselines: Sequence[Baseline]) -> None:
    """Baselines must read the same volumes as the main model and differ in variant."""
    seen = {cfg.fusion.variant}
    for _, other in baselines:
        if (other.height, other.width) != (cfg.height, cfg.width) or other.hypotheses() != cfg.hypotheses():
            raise CheckpointError(
                f"baseline {other.fusion.variant.value} was trained at {other.height}x{other.width}, "
                f"M={other.M}; the evaluated model uses {cfg.height}x{cfg.width}, M={cfg.M}"
            )
        if other.fusion.variant in seen:
            raise CheckpointError(f"variant {other.fusion.variant.value} is evaluated twice")
        seen.add(other.fusion.variant)


def _mask_scores(name: str, pairs: Sequence[Tuple[np.ndarray, np.ndarray]]) -> MaskScore:
    intersection = sum(int(np.logical_and(a, b).sum()) for a, b in pairs)
    union = sum(int(np.logical_or(a, b).sum()) for a, b in pairs)
    return MaskScore(
        name=name,
        pooled_iou=1.0 if union == 0 else intersection / union,
        mean_iou=float(np.mean([mask_iou(a, b) for a, b in pairs])),
        scenes=len(pairs),
    )


def _reductions(reports: Dict[str, MetricReport]) -> List[ErrorReductionReport]:
    mono = reports[MONO]
    result = []
    for name in [n for n in reports if n != MONO]:
        for split in ("dynamic", "overall"):
            if mono.split(split) is None or reports[name].split(split) is None:
                logger.warning("Skipping %s error reduction for %s: no %s split", split, name, split)
                continue
            result.append(error_reduction_report(mono, reports[name], split=split))
    return result


def evaluate_samples(
    samples: Sequence[PreparedSample],
    params: ParamStore,
    cfg: RunConfig,
    depth_range: Optional[Tuple[float, float]] = None,
    triptych_dir=None,
    baselines: Sequence[Baseline] = (),
) -> EvalResult:
    """Score every predictor on every sample against the rendered dynamic masks.

    ``baselines`` are further (params, config) pairs, typically other variants
    such as plain_concat, reported and reduced like the main model.
    """
    if not samples:
        raise DatasetError("no samples to evaluate")
    check_baselines(cfg, baselines)
    depth_range = depth_range or cfg.eval_range
    per_predictor: Dict[str, List[MetricReport]] = {}
    estimated_pairs, photometric_pairs = [], []

    for sample in samples:
        predictions = sample_predictions(sample, params, cfg, baselines)
        for name, depth in predictions.items():
            per_predictor.setdefault(name, []).append(
                masked_eval(depth, sample.gt_depth, sample.dynamic_mask, depth_range, name=name)
            )

        estimated = estimate_dynamic_mask(
            sample.image,
            sample.sources,
            sample.intrinsics,
            sample.mono_depth,
            predictions[PURE_MULTI_ARGMAX],
            cfg.d_max,
            tau_photo=cfg.tau_photo,
            tau_depth=cfg.tau_depth,
            warp_depth=sample.gt_depth,
        )
        photometric = gt_photometric_mask(
            sample.image, sample.sources, sample.intrinsics, sample.gt_depth, tau_photo=cfg.tau_photo
        )
        estimated_pairs.append((estimated, sample.dynamic_mask))
        photometric_pairs.append((photometric, sample.dynamic_mask))

        if triptych_dir is not None:
            write_triptych(
                Path(triptych_dir) / f"{sample.scene_id}.png",
                predictions[fused_name(cfg)],
                sample.gt_depth,
                sample.dynamic_mask,
                d_range=(cfg.d_min, cfg.d_max),
            )
        logger.debug("Evaluated %s", sample.scene_id)

    reports = {name: aggregate_reports(items, name=name) for name, items in per_predictor.items()}
    masks = [
        _mask_scores("estimated", estimated_pairs),
        _mask_scores("gt_photometric", photometric_pairs),
    ]
    return EvalResult(
        reports=list(reports.values()),
        reductions=_reductions(reports),
        masks=masks,
    )


def write_eval_files(result: EvalResult, out_dir) -> List[Path]:
    out_dir = Path(out_dir)
    paths = write_metric_files(result.reports, out_dir)
    text = "\n".join(render_error_reduction(r) for r in result.reductions)
    reduction_txt = out_dir / "error_reduction.txt"
    try:
        reduction_txt.write_text(text)
    except OSError as exc:
        raise DatasetError(f"cannot write {reduction_txt}: {exc}") from exc
    paths.append(reduction_txt)
    paths.append(write_json(out_dir / "error_reduction.json", [r.model_dump(mode="json") for r in result.reductions]))
    paths.append(write_json(out_dir / "mask_iou.json", [m.model_dump(mode="json") for m in result.masks]))
    return paths


def evaluate(
    data_dir,
    params: ParamStore,
    cfg: RunConfig,
    out_dir=None,
    cache_dir=None,
    depth_range: Optional[Tuple[float, float]] = None,
    triptychs: bool = True,
    baselines: Sequence[Baseline] = (),
) -> EvalResult:
    """Evaluate a parameter set on a dataset directory and optionally write the report files."""
    check_baselines(cfg, baselines)
    samples = prepare_dataset(data_dir, cfg, cache_dir)
    triptych_dir = Path(out_dir) / "triptychs" if (out_dir is not None and triptychs) else None
    result = evaluate_samples(samples, params, cfg, depth_range, triptych_dir, baselines)
    if out_dir is not None:
        files = write_eval_files(result, out_dir)
        result = result.model_copy(update={"files": [str(p) for p in files]})
    for score in result.masks:
        logger.info("Mask %s: pooled IoU %.3f over %d scenes", score.name, score.pooled_iou, score.scenes)
    return result
