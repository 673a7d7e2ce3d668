"""
Shared fixtures: seeded generators, 64-bit precision, small scenes and configs.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from tensor_core.tensor import Precision, precision
from tools.config import RunConfig
from tools.fusion import FusionConfig
from tools.geometry import Intrinsics, make_hypotheses
from tools.synthdata import Mover, SceneSettings, SceneSpec, TextureSpec, Wave, render_scene
from tools.volumes import build_cost_volume, volume_argmax_depth


@pytest.fixture
def rng():
    """Fresh generator with a fixed seed for every test."""
    return np.random.default_rng(42)


@pytest.fixture
def f64():
    """Run the test body with 64-bit tensors."""
    with precision(Precision.F64):
        yield


@pytest.fixture
def hyp3():
    """Hypotheses {2, 10/3, 10} used by the hand-computed examples."""
    return make_hypotheses(2.0, 10.0, 3)


@pytest.fixture
def small_K():
    return Intrinsics(fx=20.0, fy=20.0, cx=11.5, cy=7.5, width=24, height=16)


@pytest.fixture
def small_settings():
    """32 x 48 scenes; big enough for movers, cheap to render."""
    return SceneSettings(height=32, width=48, focal=40.0, ground_height=1.5)


def tiny_run_config(**updates) -> RunConfig:
    """RunConfig matching ``small_settings`` with a small head, for pipeline tests."""
    fusion = FusionConfig(M=8, downsample_factor=4, head_channels=8, context_channels=4)
    base = dict(
        height=32,
        width=48,
        M=8,
        fusion=fusion,
        epochs=2,
        batch_size=2,
        optimizer={"lr": 1e-3, "lr_drop_epoch": 1, "lr_after_drop": 1e-4},
        loss={"vnl_samples": 200},
    )
    base.update(updates)
    return RunConfig.model_validate(base)


@pytest.fixture
def tiny_cfg():
    return tiny_run_config()


def sliding_box_spec(hypotheses, with_mover: bool = True) -> SceneSpec:
    """Backdrop on a hypothesis depth and a striped box sliding 4 px per frame.

    The box sits on another hypothesis. Its stripes repeat every two frames of
    motion, so warping a source through the box's true depth lands half a period
    off and sees them inverted. Mono depth is noiseless.
    """
    settings = SceneSettings()
    K = settings.intrinsics()
    box_depth = hypotheses.depths[4]
    slide = 4.0 * box_depth / K.fx
    backdrop = TextureSpec(
        base=[0.35, 0.5, 0.65],
        waves=[
            Wave(kx=0.62, ky=0.2, phase=0.3, amplitude=0.1, tint=[1.0, 0.7, 0.4]),
            Wave(kx=-0.35, ky=0.55, phase=1.7, amplitude=0.08, tint=[0.5, 1.0, 0.8]),
            Wave(kx=1.1, ky=-0.4, phase=4.0, amplitude=0.07, tint=[0.9, 0.6, 1.0]),
        ],
    )
    stripes = TextureSpec(
        base=[0.75, 0.35, 0.25],
        waves=[Wave(kx=1.0 / (2.0 * slide), ky=0.0, phase=0.4, amplitude=0.2)],
    )
    box = Mover(x0=-1.1, x1=1.1, y0=-0.65, y1=0.65, depth=box_depth, texture=stripes, velocity=[slide, 0.0, 0.0])
    return SceneSpec(
        seed=0,
        intrinsics=K,
        d_min=hypotheses.d_min,
        d_max=hypotheses.d_max,
        camera_velocity=[0.5, 0.0, 0.0],
        movers=[box] if with_mover else [],
        backdrop_depth=hypotheses.depths[6],
        backdrop_texture=backdrop,
        mono_scale_jitter=0.0,
        mono_smooth_noise=0.0,
    )


@pytest.fixture(scope="session")
def box_hypotheses():
    """Eight hypotheses over the default 2..40 m range."""
    return make_hypotheses(2.0, 40.0, 8)


@pytest.fixture(scope="session")
def sliding_box(box_hypotheses):
    """Rendered sliding-box scene and the argmax depth of its cost volume."""
    sample = render_scene(sliding_box_spec(box_hypotheses))
    volume = build_cost_volume(sample.target, sample.sources(), sample.intrinsics, box_hypotheses)
    return sample, volume_argmax_depth(volume)
