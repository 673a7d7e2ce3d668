"""
Run configuration: one JSON document covering data, model, loss and optimizer.

Environment overrides (a ``.env`` file is honoured by the CLI):
  CUEFUSE_PRECISION  f32 | f64   replaces ``precision``
  CUEFUSE_WORKERS    int >= 1    replaces ``workers``
"""

import json
import logging
import os
from pathlib import Path
from typing import Literal, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, Field, ValidationError, model_validator

from tensor_core.tensor import Precision
from tools.errors import ConfigError
from tools.fusion import FusionConfig
from tools.geometry import HypothesisSet, make_hypotheses
from tools.losses import LossConfig
from tools.synthdata import SceneSettings

logger = logging.getLogger(__name__)

ENV_PRECISION = "CUEFUSE_PRECISION"
ENV_WORKERS = "CUEFUSE_WORKERS"
DEFAULT_CONFIG = Path(__file__).parent.parent / "config" / "run_config.json"


class OptimizerConfig(BaseModel):
    """Adam with a single step drop of the learning rate"""
    kind: Literal["adam"] = "adam"
    lr: float = Field(1e-3, ge=0)
    lr_drop_epoch: int = Field(24, ge=0)
    lr_after_drop: float = Field(1e-4, ge=0)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(1e-8, gt=0)

    @model_validator(mode="after")
    def _betas(self):
        if not all(0.0 <= b < 1.0 for b in self.betas):
            raise ValueError(f"betas must lie in [0, 1), got {self.betas}")
        return self

    def lr_at(self, epoch: int) -> float:
        return self.lr if epoch < self.lr_drop_epoch else self.lr_after_drop


class RunConfig(BaseModel):
    """Everything a train / eval run needs"""
    height: int = Field(64, gt=0)
    width: int = Field(96, gt=0)
    d_min: float = Field(2.0, gt=0)
    d_max: float = Field(40.0, gt=0)
    M: int = Field(16, ge=2)
    fusion: FusionConfig = FusionConfig()
    loss: LossConfig = LossConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    epochs: int = Field(30, ge=1)
    batch_size: int = Field(4, ge=1)
    seed: int = 0
    precision: Precision = Precision.F32
    workers: int = Field(1, ge=1)
    init_gamma: float = 0.0
    train_scenes: int = Field(50, ge=1)
    eval_scenes: int = Field(20, ge=1)
    eval_range: Tuple[float, float] = (0.0, 80.0)
    tau_photo: float = Field(0.1, ge=0)
    tau_depth: float = Field(0.2, ge=0)

    @model_validator(mode="after")
    def _consistent(self):
        if self.d_min >= self.d_max:
            raise ValueError(f"d_min {self.d_min} must be below d_max {self.d_max}")
        if self.optimizer.lr_drop_epoch >= self.epochs:
            raise ValueError(
                f"lr_drop_epoch {self.optimizer.lr_drop_epoch} must be below epochs {self.epochs}"
            )
        if self.fusion.M != self.M:
            raise ValueError(f"fusion.M ({self.fusion.M}) differs from M ({self.M})")
        factor = self.fusion.downsample_factor
        if self.height % factor or self.width % factor:
            raise ValueError(f"downsample_factor {factor} must divide {self.height}x{self.width}")
        return self

    def hypotheses(self) -> HypothesisSet:
        return make_hypotheses(self.d_min, self.d_max, self.M)

    def scene_settings(self) -> SceneSettings:
        return SceneSettings(height=self.height, width=self.width, d_min=self.d_min, d_max=self.d_max)

    def with_variant(self, variant) -> "RunConfig":
        fusion = self.fusion.model_copy(update={"variant": variant})
        return self.model_copy(update={"fusion": fusion})


def apply_env_overrides(cfg: RunConfig, env: Mapping[str, str]) -> RunConfig:
    updates = {}
    if env.get(ENV_PRECISION):
        try:
            updates["precision"] = Precision(env[ENV_PRECISION].strip().lower())
        except ValueError:
            raise ConfigError(f"{ENV_PRECISION} must be f32 or f64, got {env[ENV_PRECISION]!r}") from None
    if env.get(ENV_WORKERS):
        try:
            workers = int(env[ENV_WORKERS])
        except ValueError:
            workers = 0
        if workers < 1:
            raise ConfigError(f"{ENV_WORKERS} must be a positive integer, got {env[ENV_WORKERS]!r}")
        updates["workers"] = workers
    if updates:
        logger.info("Environment overrides: %s", {k: str(v) for k, v in updates.items()})
        cfg = cfg.model_copy(update=updates)
    return cfg


def parse_run_config(data: Union[str, dict]) -> RunConfig:
    try:
        if isinstance(data, str):
            return RunConfig.model_validate_json(data)
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(f"invalid run config at {where}: {first['msg']}") from exc


def load_run_config(path: Optional[Union[str, Path]] = None, env: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Read a RunConfig from JSON (the bundled defaults when ``path`` is None)."""
    path = Path(path) if path is not None else DEFAULT_CONFIG
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    cfg = parse_run_config(text)
    return apply_env_overrides(cfg, os.environ if env is None else env)


def save_run_config(cfg: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ConfigError(f"cannot write config {path}: {exc}") from exc
    return path
