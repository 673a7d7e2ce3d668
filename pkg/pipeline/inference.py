"""
Single-scene inference and attention-map export.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from pipeline.evaluation import predict_sample
from pipeline.trainer import PreparedSample, prepare_sample
from pipeline.volume_cache import check_resolution
from tensor_core.dft_io import write_dft
from tensor_core.params import ParamStore
from tensor_core.tensor import precision
from tools.config import RunConfig
from tools.errors import FusionError
from tools.fusion import ccf_forward
from tools.synthdata import load_manifest, load_sample
from tools.visualizer_tool import write_attention_png, write_png_preview

logger = logging.getLogger(__name__)


class InferenceOutput(BaseModel):
    scene_id: str
    depth_path: str
    preview_path: str
    attention_path: Optional[str] = None
    shape: Tuple[int, int]


def load_prepared(data_dir, scene_id: str, cfg: RunConfig, cache_dir=None) -> PreparedSample:
    record = load_manifest(data_dir).scene(scene_id)
    sample = load_sample(data_dir, record)
    check_resolution(sample, cfg)
    return prepare_sample(sample, cfg.hypotheses(), cache_dir, cfg.workers)


def attention_maps(sample: PreparedSample, params: ParamStore, cfg: RunConfig, pixel: Tuple[int, int]) -> Dict[str, np.ndarray]:
    """Rows of the relation matrices for the query pixel ``(u, v)``, each reshaped to (h, w).

    ``pixel`` is in full-resolution coordinates; it is mapped onto the attention grid
    by the downsample factor. Only variants that compute attention have rows to show.
    """
    if not cfg.fusion.variant.uses_attention:
        raise FusionError(f"variant {cfg.fusion.variant.value} has no attention to export")
    factor = cfg.fusion.downsample_factor
    h, w = cfg.height // factor, cfg.width // factor
    u, v = pixel
    if not (0 <= u < cfg.width and 0 <= v < cfg.height):
        raise FusionError(f"query pixel ({u}, {v}) lies outside {cfg.width}x{cfg.height}")
    token = (v // factor) * w + (u // factor)

    trace: Dict[str, np.ndarray] = {}
    with precision(cfg.precision):
        ccf_forward(sample.volumes.c_multi, sample.volumes.c_mono, params, cfg.fusion, trace=trace)
    return {name: relations[token].reshape(h, w).astype(np.float64) for name, relations in trace.items()}


def infer_scene(
    data_dir,
    scene_id: str,
    params: ParamStore,
    cfg: RunConfig,
    out_path,
    attention_pixel: Optional[Tuple[int, int]] = None,
    cache_dir=None,
) -> InferenceOutput:
    """Predict one scene; writes ``<out>.dft`` (DFT1 depth) and ``<out>.png`` (colored preview)."""
    sample = load_prepared(data_dir, scene_id, cfg, cache_dir)
    depth = predict_sample(sample, params, cfg)
    stem = Path(out_path).with_suffix("")
    depth_path = write_dft(stem.with_suffix(".dft"), depth.astype(np.float32))
    preview_path = write_png_preview(stem.with_suffix(".png"), depth, kind="depth", d_range=(cfg.d_min, cfg.d_max))

    attention_path = None
    if attention_pixel is not None:
        maps = attention_maps(sample, params, cfg, attention_pixel)
        attention_path = str(write_attention_png(stem.parent / f"{stem.name}_attention.png", maps))

    logger.info("Inferred %s (%s) -> %s", scene_id, cfg.fusion.variant.value, depth_path)
    return InferenceOutput(
        scene_id=scene_id,
        depth_path=str(depth_path),
        preview_path=str(preview_path),
        attention_path=attention_path,
        shape=depth.shape,
    )


def parse_pixel(text: str) -> Tuple[int, int]:
    """``"u,v"`` -> (u, v)."""
    parts: List[str] = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or not all(p.lstrip("-").isdigit() for p in parts):
        raise ValueError(f"expected 'u,v' integer pixel coordinates, got {text!r}")
    return int(parts[0]), int(parts[1])
