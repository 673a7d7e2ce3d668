"""Per-scene cue volumes: build, cache on disk, read back."""

import logging
from pathlib import Path
from typing import List, NamedTuple, Optional

from tools.config import RunConfig
from tools.errors import ConfigError
from tools.geometry import HypothesisSet
from tools.synthdata import SceneSample, load_manifest, load_sample
from tools.volumes import CueVolume, build_cost_volume, depth_to_onehot

logger = logging.getLogger(__name__)


class SampleVolumes(NamedTuple):
    c_multi: CueVolume
    c_mono: CueVolume


def check_resolution(sample: SceneSample, cfg: RunConfig) -> None:
    height, width = sample.gt_depth.shape
    if (height, width) != (cfg.height, cfg.width):
        raise ConfigError(
            f"scene {sample.scene_id} is {height}x{width} but the run config expects {cfg.height}x{cfg.width}"
        )


def build_sample_volumes(sample: SceneSample, hypotheses: HypothesisSet, workers: int = 1) -> SampleVolumes:
    c_multi = build_cost_volume(
        sample.target,
        sample.sources(),
        sample.intrinsics,
        hypotheses,
        workers=workers,
        source_ids=sample.source_ids(),
    )
    return SampleVolumes(c_multi=c_multi, c_mono=depth_to_onehot(sample.mono_depth, hypotheses))


def volume_paths(cache_dir, scene_id: str):
    root = Path(cache_dir) / scene_id
    return root / "c_multi.dft", root / "c_mono.dft"


def load_cached_volumes(cache_dir, scene_id: str, hypotheses: HypothesisSet) -> Optional[SampleVolumes]:
    """Cached volumes for ``scene_id`` if present and built over ``hypotheses``."""
    multi_path, mono_path = volume_paths(cache_dir, scene_id)
    if not (multi_path.exists() and mono_path.exists()):
        return None
    volumes = SampleVolumes(CueVolume.load(multi_path), CueVolume.load(mono_path))
    if any(v.hypotheses.depths != hypotheses.depths for v in volumes):
        logger.warning("Ignoring cached volumes for %s: hypothesis set differs", scene_id)
        return None
    return volumes


def volumes_for(
    sample: SceneSample,
    hypotheses: HypothesisSet,
    cache_dir=None,
    workers: int = 1,
) -> SampleVolumes:
    if cache_dir is not None:
        cached = load_cached_volumes(cache_dir, sample.scene_id, hypotheses)
        if cached is not None:
            return cached
    return build_sample_volumes(sample, hypotheses, workers)


def write_volume_cache(data_dir, out_dir, cfg: RunConfig, workers: int = 1) -> List[Path]:
    """Build C_multi and C_mono for every scene of a dataset into ``out_dir``."""
    manifest = load_manifest(data_dir)
    hypotheses = cfg.hypotheses()
    written = []
    for record in manifest.scenes:
        sample = load_sample(data_dir, record)
        check_resolution(sample, cfg)
        volumes = build_sample_volumes(sample, hypotheses, workers)
        multi_path, mono_path = volume_paths(out_dir, record.id)
        written.append(volumes.c_multi.save(multi_path))
        written.append(volumes.c_mono.save(mono_path))
        logger.debug("Cached volumes for %s", record.id)
    logger.info("Wrote cue volumes for %d scenes to %s", len(manifest.scenes), out_dir)
    return written
