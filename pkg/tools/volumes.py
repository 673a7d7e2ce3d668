"""
Multi-view cost volume (SSIM plane sweep) and monocular one-hot depth volume.

Both cues share the (H, W, M) layout over the same HypothesisSet so they can be
concatenated and attended over channel-by-channel.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.ndimage import uniform_filter

from tensor_core.dft_io import read_dft, write_dft
from tools.errors import DatasetError, VolumeError
from tools.geometry import HypothesisSet, Intrinsics, Pose, warp_source_to_target

logger = logging.getLogger(__name__)

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


class VolumeKind(str, Enum):
    MULTI_VIEW = "multi_view"
    MONO_ONEHOT = "mono_onehot"


class CueVolume(BaseModel):
    """(H, W, M) scores over a hypothesis set"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    data: np.ndarray
    kind: VolumeKind
    hypotheses: HypothesisSet
    source_ids: List[str] = []

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape

    def sidecar(self) -> dict:
        return {
            "kind": self.kind.value,
            "hypothesis_depths": self.hypotheses.depths,
            "bin_edges": self.hypotheses.bin_edges,
            "source_ids": self.source_ids,
            "shape": list(self.data.shape),
        }

    def save(self, path) -> Path:
        """Write the DFT1 tensor plus a ``.json`` sidecar next to it."""
        path = Path(path)
        write_dft(path, self.data)
        sidecar = path.with_suffix(".json")
        try:
            sidecar.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True))
        except OSError as exc:
            raise DatasetError(f"cannot write {sidecar}: {exc}") from exc
        return path

    @classmethod
    def load(cls, path) -> "CueVolume":
        path = Path(path)
        sidecar = path.with_suffix(".json")
        try:
            meta = json.loads(sidecar.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DatasetError(f"cannot read {sidecar}: {exc}") from exc
        depths = meta["hypothesis_depths"]
        return cls(
            data=read_dft(path),
            kind=VolumeKind(meta["kind"]),
            hypotheses=HypothesisSet(depths=depths, bin_edges=meta["bin_edges"]),
            source_ids=meta.get("source_ids", []),
        )


def ssim_score(a: np.ndarray, b: np.ndarray, window: int = 3) -> np.ndarray:
    """Per-pixel SSIM over a window x window box, channel-averaged, mapped to [0, 1]."""
    if a.shape != b.shape:
        raise VolumeError(f"ssim inputs differ in shape: {a.shape} vs {b.shape}")
    if window < 1 or window % 2 == 0:
        raise VolumeError(f"ssim window must be a positive odd integer, got {window}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    size = (window, window, 1)

    def box(x):
        return uniform_filter(x, size=size, mode="reflect")

    mu_a, mu_b = box(a), box(b)
    var_a = box(a * a) - mu_a * mu_a
    var_b = box(b * b) - mu_b * mu_b
    cov = box(a * b) - mu_a * mu_b
    numerator = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    denominator = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    ssim = (numerator / denominator).mean(axis=-1)
    return np.clip((ssim + 1.0) / 2.0, 0.0, 1.0)


def _cost_slice(target, sources, K, depth, window) -> np.ndarray:
    score_sum = np.zeros(target.shape[:2], dtype=np.float64)
    valid_sum = np.zeros(target.shape[:2], dtype=np.float64)
    for image, pose in sources:
        warped, valid = warp_source_to_target(image, K, pose, depth)
        score_sum += valid * ssim_score(target, warped, window)
        valid_sum += valid
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(valid_sum > 0, score_sum / np.maximum(valid_sum, 1.0), 0.0)


def build_cost_volume(
    target: np.ndarray,
    sources: Sequence[Tuple[np.ndarray, Pose]],
    K: Intrinsics,
    hypotheses: HypothesisSet,
    window: int = 3,
    workers: int = 1,
    source_ids: Optional[List[str]] = None,
) -> CueVolume:
    """Plane-sweep SSIM cost volume C_multi.

    ``sources`` pairs each source image with the relative pose mapping target-camera
    coordinates to that source's camera. Scores are the validity-weighted mean over
    sources; pixels invalid in every source score 0.
    """
    sources = list(sources)
    if not sources:
        raise VolumeError("build_cost_volume needs at least one source frame")

    def one(depth):
        return _cost_slice(target, sources, K, depth, window)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            slices = list(pool.map(one, hypotheses.depths))
    else:
        slices = [one(d) for d in hypotheses.depths]
    data = np.stack(slices, axis=-1).astype(np.float32)
    logger.debug("Built cost volume %s from %d sources", data.shape, len(sources))
    return CueVolume(
        data=data,
        kind=VolumeKind.MULTI_VIEW,
        hypotheses=hypotheses,
        source_ids=source_ids or [f"source_{i}" for i in range(len(sources))],
    )


def onehot_indices(depth: np.ndarray, hypotheses: HypothesisSet) -> np.ndarray:
    """Bin index k with depth in (edge_k, edge_k+1]; values above d_max clamp to M-1."""
    inner = np.asarray(hypotheses.bin_edges[1:], dtype=np.float64)
    index = np.searchsorted(inner, np.asarray(depth, dtype=np.float64), side="left")
    return np.minimum(index, hypotheses.count - 1)


def depth_to_onehot(depth: np.ndarray, hypotheses: HypothesisSet) -> CueVolume:
    """Monocular one-hot volume C_mono."""
    depth = np.asarray(depth, dtype=np.float64)
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise VolumeError("depth_to_onehot needs finite positive depth everywhere")
    index = onehot_indices(depth, hypotheses)
    data = np.zeros(depth.shape + (hypotheses.count,), dtype=np.float32)
    np.put_along_axis(data, index[..., None], 1.0, axis=-1)
    return CueVolume(data=data, kind=VolumeKind.MONO_ONEHOT, hypotheses=hypotheses, source_ids=["mono"])


def volume_argmax_depth(volume: CueVolume) -> np.ndarray:
    """Depth of the best hypothesis per pixel; ties go to the nearer depth."""
    index = np.argmax(volume.data, axis=-1)
    return volume.hypotheses.as_array()[index]


def texture_mask(image: np.ndarray, window: int = 3, min_std: float = 0.02) -> np.ndarray:
    """Pixels whose local intensity standard deviation exceeds ``min_std``."""
    gray = image.mean(axis=-1) if image.ndim == 3 else image
    gray = gray.astype(np.float64)
    mean = uniform_filter(gray, window, mode="reflect")
    var = uniform_filter(gray * gray, window, mode="reflect") - mean * mean
    return np.sqrt(np.clip(var, 0.0, None)) > min_std
