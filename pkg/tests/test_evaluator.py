"""
Tests for tools.evaluator: metrics, split handling, dynamic-mask estimation and
error reduction.
"""

import numpy as np
import pytest

from tools.errors import MetricError
from tools.evaluator import (
    ErrorReductionRow,
    MetricReport,
    aggregate_reports,
    compute_metrics,
    error_reduction_report,
    estimate_dynamic_mask,
    gt_photometric_mask,
    mask_iou,
    masked_eval,
    photometric_error,
    reduction_percent,
)
from tools.geometry import Intrinsics
from tools.synthdata import Mover, SceneSpec, TextureSpec, Wave, render_scene
from tools.volumes import build_cost_volume, volume_argmax_depth

from conftest import sliding_box_spec

K = Intrinsics(fx=40.0, fy=40.0, cx=23.5, cy=15.5, width=48, height=32)


def _metric_report(name, abs_rel, dynamic_abs_rel=None):
    base = dict(sq_rel=0.1, rmse=1.0, rmse_log=0.2, delta1=0.8, delta2=0.9, delta3=0.95, n_valid=10)
    overall = dict(base, abs_rel=abs_rel)
    dynamic = None if dynamic_abs_rel is None else dict(base, abs_rel=dynamic_abs_rel)
    return MetricReport.model_validate({"name": name, "overall": overall, "dynamic": dynamic})


@pytest.fixture(scope="module")
def moving_scene():
    """Textured backdrop plus one striped mover sliding faster than the camera."""
    backdrop = TextureSpec(
        base=[0.5, 0.5, 0.5],
        waves=[Wave(kx=0.25, ky=0.1, phase=0.0, amplitude=0.2), Wave(kx=-0.1, ky=0.2, phase=1.0, amplitude=0.1)],
    )
    stripes = TextureSpec(
        base=[0.4, 0.5, 0.6],
        waves=[Wave(kx=0.5, ky=0.0, phase=0.3, amplitude=0.3, tint=[1.0, 0.6, 0.3])],
    )
    mover = Mover(x0=-1.0, x1=1.0, y0=-0.75, y1=0.75, depth=10.0, texture=stripes, velocity=[0.5, 0.0, 0.0])
    spec = SceneSpec(
        seed=4,
        intrinsics=K,
        d_min=1.0,
        d_max=40.0,
        camera_velocity=[0.3, 0.0, 0.0],
        movers=[mover],
        backdrop_depth=20.0,
        backdrop_texture=backdrop,
        mono_scale_jitter=0.0,
        mono_smooth_noise=0.0,
    )
    return render_scene(spec)


# =============================================================================
# Metrics
# =============================================================================

class TestMetrics:

    def test_two_pixel_example(self):
        """pred (2, 4) vs gt (1, 5)."""
        m = compute_metrics(np.array([2.0, 4.0]), np.array([1.0, 5.0]))
        assert m.abs_rel == pytest.approx(0.6)
        assert m.sq_rel == pytest.approx(0.6)
        assert m.rmse == pytest.approx(1.0)
        assert m.rmse_log == pytest.approx(np.sqrt((np.log(2.0) ** 2 + np.log(0.8) ** 2) / 2))
        # ratio 1.25 is not strictly below 1.25
        assert m.delta1 == 0.0
        assert m.delta2 == 0.5
        assert m.delta3 == 0.5
        assert m.n_valid == 2

    def test_perfect_prediction(self, rng):
        gt = rng.uniform(1.0, 50.0, size=(6, 7))
        m = compute_metrics(gt, gt)
        assert m.abs_rel == 0.0 and m.rmse == 0.0
        assert m.delta1 == 1.0

    def test_depth_range_excludes_pixels(self):
        gt = np.array([0.0, 5.0, 100.0])
        m = compute_metrics(np.array([1.0, 5.0, 1.0]), gt)
        assert m.n_valid == 1 and m.abs_rel == 0.0

    def test_empty_selection(self):
        with pytest.raises(MetricError):
            compute_metrics(np.ones(3), np.full(3, 100.0))

    def test_non_positive_prediction(self):
        with pytest.raises(MetricError):
            compute_metrics(np.array([0.0, 1.0]), np.array([1.0, 1.0]))


class TestMaskedEval:

    def test_dynamic_split_sees_only_masked_pixels(self):
        """Errors outside the mask leave the dynamic split untouched."""
        gt = np.full((4, 4), 10.0)
        pred = gt.copy()
        pred[:, 2:] = 20.0
        mask = np.zeros((4, 4), dtype=bool)
        mask[:, :2] = True
        report = masked_eval(pred, gt, mask, name="p")
        assert report.dynamic.abs_rel == 0.0
        assert report.overall.abs_rel == pytest.approx(0.5)
        assert report.dynamic.n_valid == 8

    def test_no_movers_means_no_dynamic_split(self):
        gt = np.full((3, 3), 5.0)
        report = masked_eval(gt, gt, np.zeros((3, 3), dtype=bool))
        assert report.dynamic is None
        assert len(report.rows()) == 1

    def test_aggregate_averages_per_scene(self):
        reports = [_metric_report("a", 0.2, 0.4), _metric_report("a", 0.4), _metric_report("a", 0.6, 0.8)]
        merged = aggregate_reports(reports)
        assert merged.overall.abs_rel == pytest.approx(0.4)
        assert merged.dynamic.abs_rel == pytest.approx(0.6)
        assert merged.scenes == 3
        assert merged.overall.n_valid == 30

    def test_aggregate_without_dynamic(self):
        merged = aggregate_reports([_metric_report("a", 0.2)], name="renamed")
        assert merged.dynamic is None and merged.name == "renamed"

    def test_unknown_split(self):
        with pytest.raises(MetricError):
            _metric_report("a", 0.1).split("static")


# =============================================================================
# Dynamic masks
# =============================================================================

class TestDynamicMasks:

    def test_identical_frames_have_no_photometric_error(self, rng):
        image = rng.uniform(size=(8, 8, 3))
        np.testing.assert_allclose(photometric_error(image, image), 0.0, atol=1e-12)

    def test_infinite_depth_threshold_gives_empty_mask(self, moving_scene):
        s = moving_scene
        mask = estimate_dynamic_mask(
            s.target, s.sources(), s.intrinsics, s.mono_depth, np.full(s.gt_depth.shape, 40.0), 40.0,
            tau_depth=np.inf, warp_depth=s.gt_depth,
        )
        assert not mask.any()

    def test_agreeing_depths_gate_out_everything(self, moving_scene):
        s = moving_scene
        mask = estimate_dynamic_mask(s.target, s.sources(), s.intrinsics, s.gt_depth, s.gt_depth, 40.0)
        assert not mask.any()

    def test_gt_photometric_mask_finds_the_mover(self, moving_scene):
        s = moving_scene
        photometric = gt_photometric_mask(s.target, s.sources(), s.intrinsics, s.gt_depth)
        static = ~s.dynamic_mask
        assert photometric[static].mean() < 0.05
        assert mask_iou(photometric, s.dynamic_mask) > 0.3

    def test_zero_depth_threshold_reduces_to_photometric(self, moving_scene):
        s = moving_scene
        far = np.full(s.gt_depth.shape, 40.0)
        estimated = estimate_dynamic_mask(
            s.target, s.sources(), s.intrinsics, s.gt_depth, far, 40.0, tau_depth=0.0, warp_depth=s.gt_depth
        )
        expected = gt_photometric_mask(s.target, s.sources(), s.intrinsics, s.gt_depth)
        np.testing.assert_array_equal(estimated, expected)

    def test_mask_iou(self):
        a = np.array([[1, 1, 0, 0]], dtype=bool)
        b = np.array([[0, 1, 1, 0]], dtype=bool)
        assert mask_iou(a, b) == pytest.approx(1.0 / 3.0)
        assert mask_iou(np.zeros(4, dtype=bool), np.zeros(4, dtype=bool)) == 1.0


class TestEstimatedMask:
    """The estimator on a scene whose mover fools the plane sweep."""

    def test_finds_the_sliding_box(self, sliding_box, box_hypotheses):
        sample, argmax = sliding_box
        mask = estimate_dynamic_mask(
            sample.target, sample.sources(), sample.intrinsics, sample.mono_depth, argmax, box_hypotheses.d_max
        )
        assert mask_iou(mask, sample.dynamic_mask) > 0.5

    def test_static_scene_stays_clean(self, box_hypotheses):
        sample = render_scene(sliding_box_spec(box_hypotheses, with_mover=False))
        volume = build_cost_volume(sample.target, sample.sources(), sample.intrinsics, box_hypotheses)
        mask = estimate_dynamic_mask(
            sample.target,
            sample.sources(),
            sample.intrinsics,
            sample.mono_depth,
            volume_argmax_depth(volume),
            box_hypotheses.d_max,
        )
        assert not sample.dynamic_mask.any()
        assert mask.mean() < 0.01


# =============================================================================
# Error reduction
# =============================================================================

class TestErrorReduction:

    def test_reported_example(self):
        assert reduction_percent(0.221, 0.175) == pytest.approx(20.81, abs=0.01)

    def test_equal_errors(self):
        assert reduction_percent(0.3, 0.3) == 0.0

    def test_worse_final_is_negative(self):
        assert reduction_percent(0.2, 0.3) == pytest.approx(-50.0)

    def test_zero_mono_error_is_undefined(self):
        assert reduction_percent(0.0, 0.1) is None
        assert ErrorReductionRow(metric="abs_rel", mono_err=0.0, final_err=0.1).formatted() == "undefined"

    def test_report_rows(self):
        report = error_reduction_report(_metric_report("mono", 0.3, 0.221), _metric_report("fused", 0.2, 0.175))
        row = report.row("abs_rel")
        assert report.split == "dynamic"
        assert row.formatted() == "20.81%"
        assert report.row("rmse").reduction_pct == 0.0
        assert [r.metric for r in report.rows] == ["abs_rel", "sq_rel", "rmse", "rmse_log"]

    def test_overall_split(self):
        report = error_reduction_report(_metric_report("mono", 0.4), _metric_report("fused", 0.3), split="overall")
        assert report.row("abs_rel").reduction_pct == pytest.approx(25.0)

    def test_missing_dynamic_split(self):
        with pytest.raises(MetricError):
            error_reduction_report(_metric_report("mono", 0.3), _metric_report("fused", 0.2))
