"""
Tests for tools.volumes: SSIM, the plane-sweep cost volume and the one-hot
monocular volume.
"""

import numpy as np
import pytest

from tools.errors import DatasetError, VolumeError
from tools.geometry import Pose, make_hypotheses
from tools.synthdata import SceneSettings, render_scene, static_plane_spec
from tools.volumes import (
    CueVolume,
    VolumeKind,
    build_cost_volume,
    depth_to_onehot,
    onehot_indices,
    ssim_score,
    texture_mask,
    volume_argmax_depth,
)


# =============================================================================
# SSIM
# =============================================================================

class TestSsim:

    def test_identical_images_score_one(self, rng):
        image = rng.uniform(size=(10, 12, 3))
        np.testing.assert_allclose(ssim_score(image, image), 1.0)

    def test_black_vs_white(self):
        """Constant 0 vs constant 1: only the luminance term is left."""
        c1 = 0.01 ** 2
        score = ssim_score(np.zeros((5, 5)), np.ones((5, 5)))
        np.testing.assert_allclose(score, (c1 / (1.0 + c1) + 1.0) / 2.0)

    def test_anticorrelated_patches_score_low(self):
        checker = (np.indices((6, 6)).sum(axis=0) % 2).astype(np.float64)
        score = ssim_score(checker, 1.0 - checker)
        assert score.max() < 0.5

    def test_shape_mismatch(self):
        with pytest.raises(VolumeError):
            ssim_score(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_even_window_rejected(self):
        with pytest.raises(VolumeError):
            ssim_score(np.zeros((4, 4)), np.zeros((4, 4)), window=4)


# =============================================================================
# Monocular one-hot volume
# =============================================================================

class TestOneHot:

    def test_bins_of_hand_examples(self, hyp3):
        """Bins are (0, 2.5], (2.5, 5], (5, 10]; beyond 10 clamps to the last bin."""
        depth = np.array([[3.0, 2.0, 50.0, 2.5, 5.0001]])
        np.testing.assert_array_equal(onehot_indices(depth, hyp3), [[1, 0, 2, 0, 2]])

    def test_onehot_volume(self, hyp3):
        volume = depth_to_onehot(np.array([[3.0, 2.0]]), hyp3)
        assert volume.kind is VolumeKind.MONO_ONEHOT
        assert volume.data.dtype == np.float32
        np.testing.assert_array_equal(volume.data[0], [[0, 1, 0], [1, 0, 0]])
        np.testing.assert_array_equal(volume.data.sum(axis=-1), 1.0)

    def test_rejects_non_positive_depth(self, hyp3):
        with pytest.raises(VolumeError):
            depth_to_onehot(np.array([[1.0, 0.0]]), hyp3)

    def test_argmax_recovers_hypothesis_depths(self):
        hyp = make_hypotheses(2.0, 40.0, 16)
        depth = np.asarray(hyp.depths).reshape(4, 4)
        np.testing.assert_allclose(volume_argmax_depth(depth_to_onehot(depth, hyp)), depth)

    def test_round_trip_within_half_bin(self, rng):
        """Encoding then decoding moves inverse depth by at most half a bin."""
        hyp = make_hypotheses(2.0, 40.0, 16)
        depth = 1.0 / rng.uniform(1.0 / 40.0, 1.0 / 2.0, size=(250, 400))
        recovered = volume_argmax_depth(depth_to_onehot(depth, hyp))
        half_bin = (1.0 / 2.0 - 1.0 / 40.0) / 15 / 2
        assert np.abs(1.0 / depth - 1.0 / recovered).max() <= half_bin + 1e-9

    def test_argmax_ties_prefer_nearer_depth(self, hyp3):
        volume = CueVolume(data=np.full((1, 1, 3), 0.5, dtype=np.float32), kind=VolumeKind.MULTI_VIEW, hypotheses=hyp3)
        assert volume_argmax_depth(volume)[0, 0] == 2.0


# =============================================================================
# Cost volume
# =============================================================================

class TestCostVolume:

    def test_needs_a_source(self, small_K, hyp3):
        with pytest.raises(VolumeError):
            build_cost_volume(np.zeros((16, 24, 3)), [], small_K, hyp3)

    def test_static_camera_scores_one_everywhere(self, small_K, hyp3, rng):
        """With no motion every hypothesis warps perfectly."""
        target = rng.uniform(size=(16, 24, 3))
        volume = build_cost_volume(target, [(target, Pose.identity())], small_K, hyp3)
        assert volume.shape == (16, 24, 3)
        assert volume.kind is VolumeKind.MULTI_VIEW
        np.testing.assert_allclose(volume.data, 1.0, rtol=1e-5)

    def test_out_of_view_scores_zero(self, small_K, hyp3, rng):
        far_away = Pose.from_camera_center([-100.0, 0.0, 0.0])
        volume = build_cost_volume(rng.uniform(size=(16, 24)), [(rng.uniform(size=(16, 24)), far_away)], small_K, hyp3)
        assert np.all(volume.data == 0.0)

    def test_static_plane_is_recovered(self):
        """Noiseless plane on a hypothesis: argmax hits its depth on textured pixels."""
        hyp = make_hypotheses(2.0, 40.0, 8)
        settings = SceneSettings()
        for seed in (0, 1, 2):
            sample = render_scene(static_plane_spec(seed, hyp, settings))
            volume = build_cost_volume(sample.target, sample.sources(), sample.intrinsics, hyp)
            textured = texture_mask(sample.target)
            assert textured.sum() > 100
            hits = np.isclose(volume_argmax_depth(volume), sample.gt_depth)
            assert hits[textured].mean() >= 0.95

    def test_source_order_does_not_matter(self, sliding_box, box_hypotheses):
        sample, _ = sliding_box
        forward = build_cost_volume(sample.target, sample.sources(), sample.intrinsics, box_hypotheses)
        backward = build_cost_volume(sample.target, sample.sources()[::-1], sample.intrinsics, box_hypotheses)
        np.testing.assert_array_equal(forward.data, backward.data)

    def test_moving_box_misleads_the_sweep(self, sliding_box, box_hypotheses):
        """Argmax is right on the static backdrop and wrong on the box, whose stripes alias."""
        sample, argmax = sliding_box
        hits = np.isclose(argmax, sample.gt_depth)
        static = ~sample.dynamic_mask & texture_mask(sample.target)
        box = np.isclose(sample.gt_depth, box_hypotheses.depths[4])
        assert static.sum() > 1000 and box.sum() > 500
        assert hits[static].mean() >= 0.8
        assert hits[box].mean() <= 0.2

    def test_parallel_build_is_identical(self, small_K, hyp3, rng):
        target = rng.uniform(size=(16, 24, 3))
        sources = [(rng.uniform(size=(16, 24, 3)), Pose.from_camera_center([0.2, 0.0, 0.0]))]
        serial = build_cost_volume(target, sources, small_K, hyp3)
        parallel = build_cost_volume(target, sources, small_K, hyp3, workers=3)
        np.testing.assert_array_equal(serial.data, parallel.data)

    def test_save_and_load(self, tmp_path, small_K, hyp3, rng):
        target = rng.uniform(size=(16, 24, 3))
        volume = build_cost_volume(target, [(target, Pose.identity())], small_K, hyp3, source_ids=["a"])
        path = volume.save(tmp_path / "c_multi.dft")
        assert path.with_suffix(".json").exists()
        restored = CueVolume.load(path)
        np.testing.assert_array_equal(restored.data, volume.data)
        assert restored.hypotheses.depths == hyp3.depths
        assert restored.source_ids == ["a"]

    def test_unwritable_sidecar(self, tmp_path, small_K, hyp3, rng):
        target = rng.uniform(size=(16, 24, 3))
        volume = build_cost_volume(target, [(target, Pose.identity())], small_K, hyp3)
        (tmp_path / "c_multi.json").mkdir()
        with pytest.raises(DatasetError):
            volume.save(tmp_path / "c_multi.dft")

    def test_unreadable_sidecar(self, tmp_path, small_K, hyp3, rng):
        target = rng.uniform(size=(16, 24, 3))
        path = build_cost_volume(target, [(target, Pose.identity())], small_K, hyp3).save(tmp_path / "c_multi.dft")
        path.with_suffix(".json").write_text("{not json")
        with pytest.raises(DatasetError):
            CueVolume.load(path)
