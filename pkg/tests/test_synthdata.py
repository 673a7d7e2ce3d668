"""
Tests for tools.synthdata: closed-form ray casting, dynamic masks, simulated
monocular depth and the on-disk dataset.
"""

import json

import numpy as np
import pytest
from pydantic import ValidationError

from tensor_core.dft_io import read_dft
from tools.errors import DatasetError, SceneError
from tools.geometry import Intrinsics, warp_source_to_target
from tools.synthdata import (
    MANIFEST_NAME,
    Mover,
    SceneSettings,
    SceneSpec,
    TextureSpec,
    WallSegment,
    Wave,
    generate_dataset,
    load_manifest,
    load_sample,
    render_frame,
    render_scene,
    sample_scene_spec,
    scene_seed,
    simulate_mono_depth,
)

K = Intrinsics(fx=40.0, fy=40.0, cx=23.5, cy=15.5, width=48, height=32)
GREY = TextureSpec(base=[0.5, 0.5, 0.5])


def _spec(**updates):
    base = dict(
        seed=1,
        intrinsics=K,
        d_min=1.0,
        d_max=40.0,
        camera_velocity=[0.3, 0.0, 0.0],
        backdrop_depth=20.0,
        backdrop_texture=GREY,
        mono_scale_jitter=0.0,
        mono_smooth_noise=0.0,
    )
    base.update(updates)
    return SceneSpec(**base)


# =============================================================================
# Ray casting
# =============================================================================

class TestRendering:

    def test_backdrop_depth_is_constant(self):
        _, depth, moving = render_frame(_spec(), 1)
        np.testing.assert_allclose(depth, 20.0)
        assert not moving.any()

    def test_wall_occludes_backdrop(self):
        wall = WallSegment(x0=-1.0, x1=1.0, y0=-1.0, y1=1.0, depth=5.0, texture=GREY)
        _, depth, _ = render_frame(_spec(walls=[wall]), 1)
        # the wall spans |u - cx| < fx * 1 / 5 = 8 px around the centre
        assert depth[16, 24] == pytest.approx(5.0)
        assert depth[16, 2] == pytest.approx(20.0)

    def test_ground_plane_matches_closed_form(self):
        """Below the horizon, depth = h * fy / (v - cy) for a level camera."""
        spec = _spec(ground_height=1.5, ground_texture=GREY)
        _, depth, _ = render_frame(spec, 1)
        rows = np.arange(K.height, dtype=np.float64)
        analytic = 1.5 * K.fy / (rows - K.cy)
        ground_rows = (rows > K.cy) & (analytic < 20.0)
        assert ground_rows.sum() > 5
        for v in np.flatnonzero(ground_rows):
            np.testing.assert_allclose(depth[v], analytic[v], atol=1e-6)

    def test_camera_moves_with_velocity(self):
        spec = _spec()
        np.testing.assert_allclose(spec.camera_center(0), [-0.3, 0.0, 0.0])
        np.testing.assert_allclose(spec.camera_center(2), [0.3, 0.0, 0.0])
        np.testing.assert_allclose(spec.pose(1).matrix(), np.eye(4))

    def test_mover_texture_travels_with_it(self):
        """A mover keeping pace with the camera looks identical in every frame."""
        stripes = TextureSpec(base=[0.5, 0.5, 0.5], waves=[Wave(kx=1.0, ky=0.0, phase=0.0, amplitude=0.3)])
        mover = Mover(x0=-1.0, x1=1.0, y0=-1.0, y1=1.0, depth=5.0, texture=stripes, velocity=[0.3, 0.0, 0.0])
        spec = _spec(movers=[mover])
        first, _, moving_first = render_frame(spec, 0)
        last, _, moving_last = render_frame(spec, 2)
        np.testing.assert_array_equal(moving_first, moving_last)
        assert moving_first.sum() > 100
        np.testing.assert_allclose(first[moving_first], last[moving_first], atol=1e-9)
        assert mover.at_frame(2).texture_origin == pytest.approx([0.3, 0.0])


class TestSceneValidation:

    def test_object_outside_range(self):
        wall = WallSegment(x0=-1.0, x1=1.0, y0=-1.0, y1=1.0, depth=50.0, texture=GREY)
        with pytest.raises(ValidationError):
            _spec(walls=[wall])

    def test_ground_too_close(self):
        with pytest.raises(ValidationError):
            _spec(d_min=5.0, ground_height=1.5, ground_texture=GREY)

    def test_mover_must_move_a_pixel(self):
        slow = Mover(x0=-0.5, x1=0.5, y0=-0.5, y1=0.5, depth=10.0, texture=GREY, velocity=[0.01, 0.0, 0.0])
        with pytest.raises(ValidationError):
            _spec(movers=[slow])

    def test_missing_surface(self):
        """Without a backdrop some rays hit nothing."""
        wall = WallSegment(x0=-0.1, x1=0.1, y0=-0.1, y1=0.1, depth=5.0, texture=GREY)
        spec = _spec(walls=[wall], backdrop_depth=None, backdrop_texture=None)
        with pytest.raises(SceneError):
            render_scene(spec)


# =============================================================================
# Dynamic masks and mono depth
# =============================================================================

class TestDynamicMask:

    def test_static_scene_has_empty_mask(self):
        sample = render_scene(_spec())
        assert not sample.dynamic_mask.any()

    def test_mover_footprint_covers_all_frames(self):
        mover = Mover(x0=-0.5, x1=0.5, y0=-0.5, y1=0.5, depth=10.0, texture=GREY, velocity=[0.5, 0.0, 0.0])
        sample = render_scene(_spec(movers=[mover]))
        mask = sample.dynamic_mask
        # at the target frame the mover spans |u - cx| < 2 px; shifted by 2 px either way
        assert mask[16, 23] and mask[16, 24]
        assert mask[16, 23 - 3] and mask[16, 24 + 3]
        assert not mask[16, 2]
        assert sample.gt_depth[16, 24] == pytest.approx(10.0)

    def test_mover_depth_is_target_frame_geometry(self):
        mover = Mover(x0=-0.5, x1=0.5, y0=-0.5, y1=0.5, depth=10.0, texture=GREY, velocity=[0.5, 0.0, 0.0])
        spec = _spec(movers=[mover])
        sample = render_scene(spec)
        _, depth, moving = render_frame(spec, 1)
        np.testing.assert_allclose(sample.gt_depth, depth)
        assert moving.sum() < sample.dynamic_mask.sum()
        assert spec.movers[0].at_frame(2).x0 == pytest.approx(0.0)


class TestMonoDepth:

    def test_noiseless_mono_is_exact(self):
        gt = np.full((8, 8), 7.0)
        np.testing.assert_allclose(simulate_mono_depth(gt, seed=0, scale_jitter=0.0, smooth_noise=0.0), gt)

    def test_scale_only(self):
        """With no smooth noise the error is one global factor."""
        gt = np.linspace(2.0, 30.0, 64).reshape(8, 8)
        mono = simulate_mono_depth(gt, seed=3, scale_jitter=0.2, smooth_noise=0.0)
        ratio = mono / gt
        np.testing.assert_allclose(ratio, ratio[0, 0])
        assert ratio[0, 0] != pytest.approx(1.0)

    def test_smooth_noise_level(self):
        gt = np.full((64, 64), 10.0)
        mono = simulate_mono_depth(gt, seed=5, scale_jitter=0.0, smooth_noise=0.08)
        log_error = np.log(mono / gt)
        assert log_error.std() == pytest.approx(0.08, rel=1e-6)
        assert abs(log_error.mean()) < 1e-9

    def test_deterministic_in_seed(self):
        gt = np.full((16, 16), 4.0)
        np.testing.assert_array_equal(simulate_mono_depth(gt, 11), simulate_mono_depth(gt, 11))

    def test_rejects_non_positive(self):
        with pytest.raises(SceneError):
            simulate_mono_depth(np.zeros((2, 2)), 0)


# =============================================================================
# Random scenes and datasets
# =============================================================================

class TestRandomScenes:

    def test_spec_is_deterministic(self, small_settings):
        assert sample_scene_spec(17, small_settings) == sample_scene_spec(17, small_settings)
        assert sample_scene_spec(17, small_settings) != sample_scene_spec(18, small_settings)

    def test_random_scenes_render(self, small_settings):
        for seed in range(6):
            sample = render_scene(sample_scene_spec(seed, small_settings))
            assert sample.gt_depth.shape == (32, 48)
            assert sample.gt_depth.min() > small_settings.d_min
            assert sample.gt_depth.max() < small_settings.d_max
            assert len(sample.sources()) == 2

    def test_shifted_settings(self):
        shifted = SceneSettings().shifted()
        assert shifted.focal == pytest.approx(100.0)
        assert shifted.texture_period_px == (5.0, 9.0)
        assert shifted.camera_speed == (0.6, 0.9)

    def test_most_scenes_have_movers(self):
        settings = SceneSettings()
        with_movers = sum(bool(sample_scene_spec(scene_seed(0, i), settings).movers) for i in range(50))
        assert with_movers >= 35


class TestReprojection:
    """Warping sources through the rendered depth reproduces the target off the movers."""

    def test_static_pixels_reproject_and_movers_do_not(self, sliding_box):
        sample, _ = sliding_box
        dynamic = sample.dynamic_mask
        for image, pose in sample.sources():
            warped, valid = warp_source_to_target(image, sample.intrinsics, pose, sample.gt_depth)
            error = np.abs(sample.target.astype(np.float64) - warped).mean(axis=-1)
            seen = valid > 0
            outside = error[seen & ~dynamic].mean()
            inside = error[seen & dynamic].mean()
            assert outside < 0.02
            assert inside > 3.0 * outside


class TestDataset:

    def test_generate_and_reload(self, tmp_path, small_settings):
        manifest = generate_dataset(3, 7, tmp_path / "data", settings=small_settings, previews=False)
        assert [s.id for s in manifest.scenes] == ["scene_0000", "scene_0001", "scene_0002"]
        loaded = load_manifest(tmp_path / "data")
        assert loaded == manifest
        record = loaded.scene("scene_0001")
        assert len(record.frames[0].pose_4x4_row_major) == 16
        sample = load_sample(tmp_path / "data", record)
        assert sample.dynamic_mask.dtype == bool
        assert int(sample.dynamic_mask.sum()) == record.dynamic_pixels
        assert read_dft(tmp_path / "data" / record.frames[1].image).shape == (32, 48, 3)

    def test_worker_count_does_not_change_bytes(self, tmp_path, small_settings):
        generate_dataset(3, 2, tmp_path / "a", settings=small_settings, previews=False)
        generate_dataset(3, 2, tmp_path / "b", settings=small_settings, previews=False, workers=3)
        for path in sorted((tmp_path / "a").rglob("*")):
            if path.is_file():
                twin = tmp_path / "b" / path.relative_to(tmp_path / "a")
                assert twin.read_bytes() == path.read_bytes(), path.name

    def test_previews_are_written(self, tmp_path, small_settings):
        generate_dataset(1, 0, tmp_path, settings=small_settings)
        folder = tmp_path / "scenes" / "scene_0000"
        assert (folder / "frame_1.png").exists()
        assert (folder / "gt_depth.png").exists()
        assert json.loads((tmp_path / MANIFEST_NAME).read_text())["split"] == "default"

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError):
            load_manifest(tmp_path)

    def test_unknown_scene(self, tmp_path, small_settings):
        manifest = generate_dataset(1, 0, tmp_path, settings=small_settings, previews=False)
        with pytest.raises(DatasetError):
            manifest.scene("scene_9999")

    def test_zero_scenes(self, tmp_path):
        with pytest.raises(DatasetError):
            generate_dataset(0, 0, tmp_path)
