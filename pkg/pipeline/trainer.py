"""
Training loop for the fusion module.

Volumes are built once per scene before the first epoch; each step runs the
forward pass and the final loss per sample (optionally on a thread pool), sums
the per-sample gradients in a fixed order and applies one Adam update.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from pipeline.checkpoint import save_checkpoint
from pipeline.volume_cache import SampleVolumes, check_resolution, volumes_for
from tensor_core.params import ParamStore
from tensor_core.tensor import Tape, precision
from tools.config import RunConfig
from tools.errors import NonFiniteError, TrainingError
from tools.fusion import init_fusion_params, predict_depth
from tools.geometry import HypothesisSet, Intrinsics, Pose
from tools.losses import final_loss
from tools.optimizer import Adam
from tools.report_renderer import write_loss_log
from tools.synthdata import SceneSample, load_manifest, load_sample

logger = logging.getLogger(__name__)

NAN_DUMP = "nan_dump.json"


class PreparedSample(NamedTuple):
    scene_id: str
    image: np.ndarray
    volumes: SampleVolumes
    gt_depth: np.ndarray
    mono_depth: np.ndarray
    dynamic_mask: np.ndarray
    intrinsics: Intrinsics
    sources: List[Tuple[np.ndarray, Pose]]


class StepTerms(NamedTuple):
    total: float
    si: float
    vnl: Optional[float]
    mono_diag: float


class TrainResult(BaseModel):
    checkpoint: Optional[str] = None
    loss_log: Optional[str] = None
    steps: int
    final_loss: float


def prepare_sample(sample: SceneSample, hypotheses: HypothesisSet, cache_dir=None, workers: int = 1) -> PreparedSample:
    return PreparedSample(
        scene_id=sample.scene_id,
        image=sample.target,
        volumes=volumes_for(sample, hypotheses, cache_dir, workers),
        gt_depth=sample.gt_depth,
        mono_depth=sample.mono_depth,
        dynamic_mask=sample.dynamic_mask,
        intrinsics=sample.intrinsics,
        sources=sample.sources(),
    )


def prepare_dataset(data_dir, cfg: RunConfig, cache_dir=None) -> List[PreparedSample]:
    manifest = load_manifest(data_dir)
    hypotheses = cfg.hypotheses()
    prepared = []
    for record in manifest.scenes:
        sample = load_sample(data_dir, record)
        check_resolution(sample, cfg)
        prepared.append(prepare_sample(sample, hypotheses, cache_dir, cfg.workers))
    logger.info("Prepared volumes for %d scenes from %s", len(prepared), data_dir)
    return prepared


def loss_seed(seed: int, epoch: int, index: int) -> int:
    """Per-sample VNL seed; independent of the order samples are processed in."""
    return int(np.random.SeedSequence([seed, epoch, index]).generate_state(1)[0])


class Trainer:
    """Owns the parameters, the optimizer and the running loss log"""

    def __init__(self, cfg: RunConfig, params: Optional[ParamStore] = None):
        self.cfg = cfg
        self.hypotheses = cfg.hypotheses()
        with precision(cfg.precision):
            self.params = params if params is not None else init_fusion_params(
                cfg.fusion, seed=cfg.seed, gamma=cfg.init_gamma
            )
        self.optimizer = Adam(cfg.optimizer)
        self.log: List[dict] = []
        self.step_count = 0
        self.nan_dump_dir: Optional[Path] = None

    # ------------------------------------------------------------ one sample
    def sample_gradients(self, sample: PreparedSample, epoch: int, index: int) -> Tuple[Dict[str, np.ndarray], StepTerms]:
        """Forward, final loss and backward for one sample on the calling thread."""
        cfg = self.cfg
        try:
            with Tape() as tape:
                pred = predict_depth(
                    sample.volumes.c_multi,
                    sample.volumes.c_mono,
                    sample.image,
                    self.hypotheses,
                    self.params,
                    cfg.fusion,
                )
                loss = final_loss(
                    sample.mono_depth,
                    pred,
                    sample.gt_depth,
                    sample.intrinsics,
                    None,
                    cfg.loss,
                    rng_seed=loss_seed(cfg.seed, epoch, index),
                )
                tape.backward(loss.total)
        except NonFiniteError as exc:
            nan = float("nan")
            self._dump_nan(sample.scene_id, StepTerms(nan, nan, None, nan))
            raise TrainingError(f"non-finite value while training on {sample.scene_id}: {exc}") from exc
        terms = StepTerms(
            total=loss.total.item(),
            si=loss.terms.si.item(),
            vnl=None if loss.terms.vnl is None else loss.terms.vnl.item(),
            mono_diag=loss.mono_term,
        )
        return self.params.collect_grads(tape), terms

    # ------------------------------------------------------------ one step
    def optimize_batch(self, samples: Sequence[PreparedSample], indices: Sequence[int], epoch: int) -> StepTerms:
        """One Adam step on the mean gradient of ``samples``; returns the mean loss terms."""
        cfg = self.cfg

        def run(pair):
            sample, index = pair
            return self.sample_gradients(sample, epoch, index)

        pairs = list(zip(samples, indices))
        with precision(cfg.precision):
            if cfg.workers > 1 and len(pairs) > 1:
                with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                    results = list(pool.map(run, pairs))
            else:
                results = [run(pair) for pair in pairs]

            for (sample, _), (_, terms) in zip(pairs, results):
                if not np.isfinite(terms.total):
                    self._dump_nan(sample.scene_id, terms)
                    raise TrainingError(f"loss is {terms.total} on sample {sample.scene_id}")

            self.params.zero_grad()
            for grads, _ in results:
                self.params.accumulate(grads, scale=1.0 / len(results))
            lr = self.optimizer.lr_at(epoch)
            self.optimizer.step(self.params, lr)

        self.step_count += 1
        vnl = [t.vnl for _, t in results if t.vnl is not None]
        mean = StepTerms(
            total=float(np.mean([t.total for _, t in results])),
            si=float(np.mean([t.si for _, t in results])),
            vnl=float(np.mean(vnl)) if vnl else None,
            mono_diag=float(np.mean([t.mono_diag for _, t in results])),
        )
        self.log.append({"step": self.step_count, "epoch": epoch, **mean._asdict(), "lr": lr})
        return mean

    # ------------------------------------------------------------ epochs
    def train_epoch(self, samples: Sequence[PreparedSample], epoch: int) -> float:
        cfg = self.cfg
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch]))
        order = rng.permutation(len(samples))
        totals = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [int(i) for i in order[start:start + cfg.batch_size]]
            terms = self.optimize_batch([samples[i] for i in batch], batch, epoch)
            totals.append(terms.total)
        mean = float(np.mean(totals))
        logger.info(
            "Epoch %d/%d: mean loss %.4f (lr %.1e, gamma %.4f)",
            epoch + 1, cfg.epochs, mean, self.optimizer.lr_at(epoch), self._gamma(),
        )
        return mean

    def fit(self, samples: Sequence[PreparedSample], out_path=None, loss_log=None) -> TrainResult:
        if not samples:
            raise TrainingError("no training samples")
        self.nan_dump_dir = Path(out_path).parent if out_path is not None else None
        last = float("nan")
        for epoch in range(self.cfg.epochs):
            last = self.train_epoch(samples, epoch)
            if loss_log is not None:
                write_loss_log(self.log, loss_log)
        checkpoint = None
        if out_path is not None:
            checkpoint = str(save_checkpoint(self.params, self.cfg, out_path))
        return TrainResult(
            checkpoint=checkpoint,
            loss_log=None if loss_log is None else str(loss_log),
            steps=self.step_count,
            final_loss=last,
        )

    # ------------------------------------------------------------ diagnostics
    def _gamma(self) -> float:
        return float(self.params["gamma"].item()) if "gamma" in self.params else 0.0

    def _dump_nan(self, scene_id: str, terms: StepTerms) -> None:
        folder = self.nan_dump_dir
        if folder is None:
            return
        payload = {
            "sample_id": scene_id,
            "step": self.step_count,
            "terms": {k: (None if v is None or not np.isfinite(v) else v) for k, v in terms._asdict().items()},
            "parameter_norms": {name: float(np.linalg.norm(v.data)) for name, v in self.params.items()},
        }
        path = folder / NAN_DUMP
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        logger.error("Wrote diagnostic dump for %s to %s", scene_id, path)


def train(data_dir, cfg: RunConfig, out_path, loss_log=None, cache_dir=None) -> TrainResult:
    """Prepare a dataset, train for ``cfg.epochs`` and write the checkpoint."""
    samples = prepare_dataset(data_dir, cfg, cache_dir)
    trainer = Trainer(cfg)
    logger.info(
        "Training %s on %d scenes: %d parameters, %d epochs, batch %d",
        cfg.fusion.variant.value, len(samples), trainer.params.numel(), cfg.epochs, cfg.batch_size,
    )
    result = trainer.fit(samples, out_path=out_path, loss_log=loss_log)
    logger.info("Saved checkpoint to %s", result.checkpoint)
    return result
