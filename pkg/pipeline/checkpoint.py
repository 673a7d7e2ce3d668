"""
Checkpoints: the ParamStore container with the RunConfig embedded in its index,
so evaluation always rebuilds the variant the parameters were trained for.
"""

import logging
from pathlib import Path
from typing import Optional, Tuple, Union

from tensor_core.params import ParamStore
from tools.config import RunConfig, parse_run_config
from tools.errors import CheckpointError, ConfigError, FusionError
from tools.fusion import FusionVariant, check_params, select_variant_params

logger = logging.getLogger(__name__)

META_KEY = "run_config"


def save_checkpoint(params: ParamStore, cfg: RunConfig, path: Union[str, Path]) -> Path:
    check_params(params, cfg.fusion)
    return params.save(path, meta={META_KEY: cfg.model_dump(mode="json")})


def load_checkpoint(
    path: Union[str, Path],
    variant: Optional[Union[str, FusionVariant]] = None,
) -> Tuple[ParamStore, RunConfig]:
    """Read parameters and their RunConfig; ``variant`` re-targets to another variant.

    Overriding keeps the stored parameters the new variant shares with the
    trained one and fails if any it needs are absent.
    """
    params, meta = ParamStore.load(path)
    if META_KEY not in meta:
        raise CheckpointError(f"{path} carries no run config; cannot tell which variant it holds")
    try:
        cfg = parse_run_config(meta[META_KEY])
    except ConfigError as exc:
        raise CheckpointError(f"{path}: embedded run config is invalid: {exc}") from exc
    try:
        check_params(params, cfg.fusion)
    except FusionError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc

    if variant is not None and FusionVariant(variant) is not cfg.fusion.variant:
        target = cfg.with_variant(FusionVariant(variant))
        logger.warning(
            "Evaluating %s checkpoint as variant %s", cfg.fusion.variant.value, target.fusion.variant.value
        )
        try:
            params = select_variant_params(params, target.fusion)
        except FusionError as exc:
            raise CheckpointError(f"{path}: {exc}") from exc
        cfg = target
    return params, cfg
