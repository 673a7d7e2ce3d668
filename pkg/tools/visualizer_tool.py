"""
Raster Visualization Tool - 8-bit PNG previews of images, depth, masks and attention

PURPOSE: Turns float rasters produced by the pipeline into images a person can
look at next to the DFT1 files (synthetic scenes, evaluation triptychs, attention
rows of the cross-cue module).

HOW IT WORKS:
  1. Depth is colored on inverse depth (near = bright) with a matplotlib colormap
  2. Errors use a sequential colormap clipped at a fixed AbsRel ceiling
  3. Masks are written as black / white
  4. Panels are joined left to right with a thin gutter and saved with Pillow

USAGE:
  from tools.visualizer_tool import write_triptych

  write_triptych("scene_0003.png", pred, gt, dynamic_mask, d_range=(2.0, 40.0))
"""

import logging
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from matplotlib import colormaps
from PIL import Image

from tools.errors import DatasetError

logger = logging.getLogger(__name__)

DEPTH_CMAP = "magma"
ERROR_CMAP = "inferno"
ATTENTION_CMAP = "viridis"
ERROR_CEILING = 0.5
GUTTER = 2
ATTENTION_SCALE = 8


def _to_uint8(rgb: np.ndarray) -> np.ndarray:
    return np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)


def _colorize(values: np.ndarray, cmap: str) -> np.ndarray:
    return colormaps[cmap](np.clip(values, 0.0, 1.0))[..., :3]


def depth_to_rgb(depth: np.ndarray, d_range: Optional[Tuple[float, float]] = None) -> np.ndarray:
    """Color a depth map by normalized inverse depth."""
    depth = np.asarray(depth, dtype=np.float64)
    d_min, d_max = d_range if d_range is not None else (depth.min(), depth.max())
    inv = 1.0 / np.clip(depth, d_min, d_max)
    span = 1.0 / d_min - 1.0 / d_max
    normalized = (inv - 1.0 / d_max) / span if span > 0 else np.zeros_like(inv)
    return _colorize(normalized, DEPTH_CMAP)


def error_to_rgb(pred: np.ndarray, gt: np.ndarray, ceiling: float = ERROR_CEILING) -> np.ndarray:
    """Per-pixel absolute relative error, saturating at ``ceiling``."""
    error = np.abs(np.asarray(pred, dtype=np.float64) - gt) / np.asarray(gt, dtype=np.float64)
    return _colorize(error / ceiling, ERROR_CMAP)


def mask_to_rgb(mask: np.ndarray) -> np.ndarray:
    return np.repeat(np.asarray(mask, dtype=np.float64)[..., None], 3, axis=-1)


def _save(path, rgb: np.ndarray) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(_to_uint8(rgb)).save(path, format="PNG")
    except OSError as exc:
        raise DatasetError(f"cannot write {path}: {exc}") from exc
    return path


def _join(panels: Sequence[np.ndarray]) -> np.ndarray:
    height = max(p.shape[0] for p in panels)
    gutter = np.ones((height, GUTTER, 3))
    pieces = []
    for i, panel in enumerate(panels):
        if i:
            pieces.append(gutter)
        pad = height - panel.shape[0]
        pieces.append(np.pad(panel, ((0, pad), (0, 0), (0, 0)), constant_values=1.0))
    return np.concatenate(pieces, axis=1)


def write_png_preview(path, array: np.ndarray, kind: str = "image", d_range=None) -> Path:
    """Write one raster as PNG; ``kind`` is ``image``, ``depth`` or ``mask``."""
    if kind == "image":
        rgb = np.asarray(array, dtype=np.float64)
        if rgb.ndim == 2:
            rgb = np.repeat(rgb[..., None], 3, axis=-1)
    elif kind == "depth":
        rgb = depth_to_rgb(array, d_range)
    elif kind == "mask":
        rgb = mask_to_rgb(array)
    else:
        raise ValueError(f"unknown preview kind {kind!r}")
    return _save(path, rgb)


def write_triptych(path, pred: np.ndarray, gt: np.ndarray, mask: np.ndarray, d_range=None) -> Path:
    """Predicted depth | error map | dynamic mask."""
    panels = [depth_to_rgb(pred, d_range), error_to_rgb(pred, gt), mask_to_rgb(mask)]
    return _save(path, _join(panels))


def write_attention_png(path, maps: Dict[str, np.ndarray], scale: int = ATTENTION_SCALE) -> Path:
    """Side-by-side attention rows (each h x w, normalized to its own max)."""
    if not maps:
        raise ValueError("no attention maps to draw")
    panels = []
    for name in sorted(maps):
        row = np.asarray(maps[name], dtype=np.float64)
        peak = row.max()
        panel = _colorize(row / peak if peak > 0 else row, ATTENTION_CMAP)
        panel = np.repeat(np.repeat(panel, scale, axis=0), scale, axis=1)
        panels.append(panel)
    logger.debug("Attention panels: %s", ", ".join(sorted(maps)))
    return _save(path, _join(panels))
