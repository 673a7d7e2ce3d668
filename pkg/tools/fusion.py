"""
Cross-cue fusion (CCF) of the multi-view cost volume and the monocular one-hot volume.

Graph (full variant):

    F_multi, F_mono   = shallow strided convs of C_multi, C_mono
    F~_multi          = CCA(guide=F_mono,  value=F_multi)   # R_mono steers multi
    F~_mono           = CCA(guide=F_multi, value=F_mono)    # R_multi steers mono
    F_cat             = Cat(ReLU(Conv(C_multi)), ReLU(Conv(C_mono)))
    F                 = gamma * Up(Cat(F~_multi, F~_mono)) + F_cat

followed by a soft-argmax depth head over the hypotheses. Parameter slot names
follow the full variant; ablation variants drop the slots they do not use, so a
ParamStore always matches its variant exactly.
"""

import logging
import math
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from tensor_core.ops import (
    op_add,
    op_bilinear_upsample,
    op_channel_softmax,
    op_concat_channels,
    op_conv2d,
    op_matmul,
    op_mul,
    op_reciprocal,
    op_relu,
    op_reshape,
    op_row_softmax,
    op_transpose,
)
from tensor_core.params import ParamStore
from tensor_core.tensor import Tensor, current_dtype
from tools.errors import AttentionMemoryError, FusionError
from tools.geometry import HypothesisSet
from tools.volumes import CueVolume

logger = logging.getLogger(__name__)

VolumeLike = Union[CueVolume, Tensor, np.ndarray]


class FusionVariant(str, Enum):
    """Fusion switchboard: the full module, its ablations and the single-cue baselines"""
    FULL = "full"
    NO_R_MULTI = "no_R_multi"
    NO_R_MONO = "no_R_mono"
    INTRA_CUE_SELF_ATTENTION = "intra_cue_self_attention"
    NO_RESIDUAL = "no_residual"
    PLAIN_CONCAT = "plain_concat"
    PURE_MULTI = "pure_multi"
    PURE_MONO = "pure_mono"

    @property
    def uses_attention(self) -> bool:
        return self in ATTENTION_VARIANTS


ATTENTION_VARIANTS = {
    FusionVariant.FULL,
    FusionVariant.NO_R_MULTI,
    FusionVariant.NO_R_MONO,
    FusionVariant.INTRA_CUE_SELF_ATTENTION,
    FusionVariant.NO_RESIDUAL,
}


class FusionConfig(BaseModel):
    """Shape and variant of the fusion module"""
    M: int = Field(16, ge=2)
    downsample_factor: int = Field(4, ge=1)
    variant: FusionVariant = FusionVariant.FULL
    use_image_context: bool = True
    image_channels: int = Field(3, ge=1)
    context_channels: int = Field(16, ge=1)
    head_channels: int = Field(64, ge=1)
    max_tokens: int = Field(4096, ge=1)

    @model_validator(mode="after")
    def _square_factor(self):
        root = math.isqrt(self.downsample_factor)
        if root * root != self.downsample_factor:
            raise ValueError(
                f"downsample_factor must be a perfect square (two stride-sqrt convs), got {self.downsample_factor}"
            )
        return self

    @property
    def stride(self) -> int:
        return math.isqrt(self.downsample_factor)

    def check_dims(self, height: int, width: int) -> None:
        f = self.downsample_factor
        if height % f or width % f:
            raise FusionError(f"downsample_factor {f} does not divide {height}x{width}")


class FeaturePair(NamedTuple):
    f_multi: Tensor
    f_mono: Tensor


# ---------------------------------------------------------------- parameters

THETA_GUIDED_BY_MONO = ("cca.theta_q_mono", "cca.theta_k_mono", "cca.theta_v_multi")
THETA_GUIDED_BY_MULTI = ("cca.theta_q_multi", "cca.theta_k_multi", "cca.theta_v_mono")


def _conv_names(prefix: str) -> List[str]:
    return [f"{prefix}.kernel", f"{prefix}.bias"]


def required_parameters(cfg: FusionConfig) -> List[str]:
    """Exact parameter names the variant's graph references."""
    v = cfg.variant
    names: List[str] = []
    if v.uses_attention:
        for cue in ("multi", "mono"):
            names += _conv_names(f"down_{cue}.0") + _conv_names(f"down_{cue}.1")
        if v is not FusionVariant.NO_R_MONO:
            names += list(THETA_GUIDED_BY_MONO)
        if v is not FusionVariant.NO_R_MULTI:
            names += list(THETA_GUIDED_BY_MULTI)
        names.append("gamma")
    if v is not FusionVariant.NO_RESIDUAL:
        if v is not FusionVariant.PURE_MONO:
            names += _conv_names("cat_multi")
        if v is not FusionVariant.PURE_MULTI:
            names += _conv_names("cat_mono")
    if cfg.use_image_context:
        names += _conv_names("context.0") + _conv_names("context.1")
    names += _conv_names("head.0") + _conv_names("head.1")
    return names


def head_input_channels(cfg: FusionConfig) -> int:
    return 2 * cfg.M + (cfg.context_channels if cfg.use_image_context else 0)


def parameter_shapes(cfg: FusionConfig) -> Dict[str, tuple]:
    M = cfg.M
    shapes = {"gamma": ()}
    for cue in ("multi", "mono"):
        shapes[f"down_{cue}.0.kernel"] = (3, 3, M, M)
        shapes[f"down_{cue}.1.kernel"] = (3, 3, M, M)
        shapes[f"down_{cue}.0.bias"] = (M,)
        shapes[f"down_{cue}.1.bias"] = (M,)
        shapes[f"cat_{cue}.kernel"] = (3, 3, M, M)
        shapes[f"cat_{cue}.bias"] = (M,)
    for name in THETA_GUIDED_BY_MONO + THETA_GUIDED_BY_MULTI:
        shapes[name] = (1, 1, M, M)
    c, ctx = cfg.image_channels, cfg.context_channels
    shapes["context.0.kernel"] = (3, 3, c, ctx)
    shapes["context.0.bias"] = (ctx,)
    shapes["context.1.kernel"] = (3, 3, ctx, ctx)
    shapes["context.1.bias"] = (ctx,)
    shapes["head.0.kernel"] = (3, 3, head_input_channels(cfg), cfg.head_channels)
    shapes["head.0.bias"] = (cfg.head_channels,)
    shapes["head.1.kernel"] = (1, 1, cfg.head_channels, M)
    shapes["head.1.bias"] = (M,)
    return shapes


def init_fusion_params(cfg: FusionConfig, seed: int = 0, gamma: float = 0.0) -> ParamStore:
    """He-normal conv kernels, zero biases, small projections, gamma = 0."""
    rng = np.random.default_rng(seed)
    shapes = parameter_shapes(cfg)
    dtype = current_dtype()
    store = ParamStore()
    for name in required_parameters(cfg):
        shape = shapes[name]
        if name == "gamma":
            value = np.asarray(gamma, dtype=dtype)
        elif name.endswith(".bias"):
            value = np.zeros(shape, dtype=dtype)
        elif name.startswith("cca."):
            value = rng.normal(0.0, 1.0 / math.sqrt(cfg.M), size=shape).astype(dtype)
        else:
            fan_in = shape[0] * shape[1] * shape[2]
            value = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape).astype(dtype)
        store.add(name, value)
    logger.debug("Initialized %d fusion parameters for variant %s", len(store), cfg.variant.value)
    return store


def check_params(params: ParamStore, cfg: FusionConfig) -> None:
    """Fail unless ``params`` holds exactly the variant's parameters with the right shapes."""
    required = required_parameters(cfg)
    missing = [n for n in required if n not in params]
    extra = [n for n in params.names() if n not in set(required)]
    if missing or extra:
        raise FusionError(
            f"parameters do not match variant {cfg.variant.value}: missing {missing}, unexpected {extra}"
        )
    shapes = parameter_shapes(cfg)
    for name in required:
        if params[name].shape != shapes[name]:
            raise FusionError(f"parameter {name!r} has shape {params[name].shape}, expected {shapes[name]}")


def select_variant_params(params: ParamStore, cfg: FusionConfig) -> ParamStore:
    """Copy the subset of ``params`` a (possibly different) variant needs."""
    missing = [n for n in required_parameters(cfg) if n not in params]
    if missing:
        raise FusionError(f"cannot run variant {cfg.variant.value}: parameters {missing} are absent")
    return params.subset(required_parameters(cfg))


# ---------------------------------------------------------------- building blocks

def _as_tensor(volume: VolumeLike) -> Tensor:
    if isinstance(volume, Tensor):
        return volume
    if isinstance(volume, CueVolume):
        return Tensor(volume.data)
    return Tensor(volume)


def _conv(x: Tensor, params: ParamStore, prefix: str, stride: int = 1) -> Tensor:
    return op_conv2d(x, params[f"{prefix}.kernel"], params[f"{prefix}.bias"], stride=stride)


def downsample_cues(c_multi: VolumeLike, c_mono: VolumeLike, params: ParamStore, cfg: FusionConfig) -> FeaturePair:
    """Two strided convs per cue (ReLU between): (H, W, M) -> (H/f, W/f, M)."""
    if isinstance(c_multi, CueVolume) and isinstance(c_mono, CueVolume):
        if c_multi.hypotheses.depths != c_mono.hypotheses.depths:
            raise FusionError("cue volumes were built over different hypothesis sets")
    multi, mono = _as_tensor(c_multi), _as_tensor(c_mono)
    if multi.shape != mono.shape:
        raise FusionError(f"cue volumes differ in shape: {multi.shape} vs {mono.shape}")
    height, width, _ = multi.shape
    cfg.check_dims(height, width)
    features = []
    for cue, volume in (("multi", multi), ("mono", mono)):
        x = op_relu(_conv(volume, params, f"down_{cue}.0", stride=cfg.stride))
        x = _conv(x, params, f"down_{cue}.1", stride=cfg.stride)
        expected = (height // cfg.downsample_factor, width // cfg.downsample_factor)
        if x.shape[:2] != expected:
            raise FusionError(f"downsampled {cue} features are {x.shape[:2]}, expected {expected}")
        features.append(x)
    return FeaturePair(*features)


def cca(
    f_guide: Tensor,
    f_value: Tensor,
    theta_q: Tensor,
    theta_k: Tensor,
    theta_v: Tensor,
    max_tokens: int = 4096,
    trace: Optional[Dict[str, np.ndarray]] = None,
    trace_key: str = "R",
) -> Tensor:
    """Cross-cue attention: relations from the guide cue re-weight the value cue.

    Q and K are 1x1 projections of the guide, V a 1x1 projection of the value;
    R = row_softmax(Q K^T) over the h*w positions and the output is R V.
    """
    if f_guide.shape != f_value.shape:
        raise FusionError(f"cca guide {f_guide.shape} and value {f_value.shape} differ")
    h, w, m = f_guide.shape
    tokens = h * w
    if tokens > max_tokens:
        raise AttentionMemoryError(
            f"attention over {tokens} positions exceeds the cap of {max_tokens}; "
            f"increase downsample_factor"
        )
    q = op_reshape(op_conv2d(f_guide, theta_q), (tokens, m))
    k = op_reshape(op_conv2d(f_guide, theta_k), (tokens, m))
    v = op_reshape(op_conv2d(f_value, theta_v), (tokens, m))
    relations = op_row_softmax(op_matmul(q, op_transpose(k)))
    if trace is not None:
        trace[trace_key] = relations.data.copy()
    return op_reshape(op_matmul(relations, v), (h, w, m))


def concat_cues(c_multi: VolumeLike, c_mono: VolumeLike, params: ParamStore) -> Tensor:
    """F_cat: full-resolution 3x3 conv + ReLU per cue, concatenated to 2M channels."""
    multi = op_relu(_conv(_as_tensor(c_multi), params, "cat_multi"))
    mono = op_relu(_conv(_as_tensor(c_mono), params, "cat_mono"))
    return op_concat_channels([multi, mono])


def ccf_forward(
    c_multi: VolumeLike,
    c_mono: VolumeLike,
    params: ParamStore,
    cfg: FusionConfig,
    trace: Optional[Dict[str, np.ndarray]] = None,
) -> Tensor:
    """Fused (H, W, 2M) feature for the configured variant."""
    check_params(params, cfg)
    v = cfg.variant

    if v is FusionVariant.PURE_MULTI:
        single = op_relu(_conv(_as_tensor(c_multi), params, "cat_multi"))
        return op_concat_channels([single, single])
    if v is FusionVariant.PURE_MONO:
        single = op_relu(_conv(_as_tensor(c_mono), params, "cat_mono"))
        return op_concat_channels([single, single])

    f_cat = None if v is FusionVariant.NO_RESIDUAL else concat_cues(c_multi, c_mono, params)
    if v is FusionVariant.PLAIN_CONCAT:
        return f_cat

    pair = downsample_cues(c_multi, c_mono, params, cfg)
    intra = v is FusionVariant.INTRA_CUE_SELF_ATTENTION

    if v is FusionVariant.NO_R_MONO:
        enhanced_multi = pair.f_multi
    else:
        guide = pair.f_multi if intra else pair.f_mono
        enhanced_multi = cca(
            guide, pair.f_multi, *(params[n] for n in THETA_GUIDED_BY_MONO),
            max_tokens=cfg.max_tokens, trace=trace, trace_key="R_mono",
        )

    if v is FusionVariant.NO_R_MULTI:
        enhanced_mono = pair.f_mono
    else:
        guide = pair.f_mono if intra else pair.f_multi
        enhanced_mono = cca(
            guide, pair.f_mono, *(params[n] for n in THETA_GUIDED_BY_MULTI),
            max_tokens=cfg.max_tokens, trace=trace, trace_key="R_multi",
        )

    fused = op_concat_channels([enhanced_multi, enhanced_mono])
    residual = op_mul(op_bilinear_upsample(fused, cfg.downsample_factor), params["gamma"])
    if f_cat is None:
        return residual
    return op_add(residual, f_cat)


def encode_context(image: Union[Tensor, np.ndarray], params: ParamStore) -> Tensor:
    """Two 3x3 conv + ReLU layers over the target image."""
    x = op_relu(_conv(_as_tensor(image), params, "context.0"))
    return op_relu(_conv(x, params, "context.1"))


def soft_argmax_depth(probabilities: Tensor, hypotheses: HypothesisSet) -> Tensor:
    """Depth from the expected inverse depth under per-pixel hypothesis weights."""
    h, w, m = probabilities.shape
    if m != hypotheses.count:
        raise FusionError(f"{m} probability channels for {hypotheses.count} hypotheses")
    inverse = Tensor(hypotheses.inverse_depths().reshape(m, 1))
    expected = op_matmul(op_reshape(probabilities, (h * w, m)), inverse)
    return op_reshape(op_reciprocal(expected), (h, w))


def depth_head(
    fused: Tensor,
    context: Optional[Tensor],
    hypotheses: HypothesisSet,
    params: ParamStore,
    cfg: FusionConfig,
) -> Tensor:
    """conv3x3 -> ReLU -> conv1x1 -> channel softmax -> soft-argmax depth (H, W)."""
    if cfg.use_image_context:
        if context is None:
            raise FusionError("use_image_context is set but no image context was given")
        x = op_concat_channels([fused, context])
    else:
        x = fused
    hidden = op_relu(_conv(x, params, "head.0"))
    logits = _conv(hidden, params, "head.1")
    return soft_argmax_depth(op_channel_softmax(logits), hypotheses)


def predict_depth(
    c_multi: VolumeLike,
    c_mono: VolumeLike,
    image: Optional[np.ndarray],
    hypotheses: HypothesisSet,
    params: ParamStore,
    cfg: FusionConfig,
    trace: Optional[Dict[str, np.ndarray]] = None,
) -> Tensor:
    """Full forward pass: fusion, optional image context, depth head."""
    fused = ccf_forward(c_multi, c_mono, params, cfg, trace=trace)
    context = None
    if cfg.use_image_context:
        if image is None:
            raise FusionError("use_image_context is set but no target image was given")
        context = encode_context(image, params)
    return depth_head(fused, context, hypotheses, params, cfg)
