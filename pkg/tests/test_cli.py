"""
Tests for the cuefuse command line (click CliRunner).
"""

import numpy as np
import pytest
from click.testing import CliRunner

from pipeline.cli import cli
from tools.config import save_run_config
from tools.volumes import CueVolume

from conftest import tiny_run_config


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny run config, a two-scene dataset and a trained checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    config = save_run_config(tiny_run_config(epochs=1, optimizer={"lr_drop_epoch": 0}), root / "run.json")
    runner = CliRunner()
    synth = runner.invoke(
        cli, ["synth", "--scenes", "2", "--seed", "3", "--out", str(root / "data"),
              "--config", str(config), "--no-previews"], obj={},
    )
    assert synth.exit_code == 0, synth.output
    train = runner.invoke(
        cli, ["train", "--data", str(root / "data"), "--out", str(root / "full.ckpt"), "--config", str(config)],
        obj={},
    )
    assert train.exit_code == 0, train.output
    return root


def _invoke(*args):
    return CliRunner().invoke(cli, list(args), obj={})


class TestSynth:

    def test_reports_scene_count(self, workspace):
        assert (workspace / "data" / "manifest.json").exists()

    def test_deterministic_in_seed(self, tmp_path, workspace):
        config = str(workspace / "run.json")
        first = _invoke("synth", "--scenes", "2", "--seed", "3", "--out", str(tmp_path / "a"),
                        "--config", config, "--no-previews")
        second = _invoke("--deterministic", "synth", "--scenes", "2", "--seed", "3", "--out", str(tmp_path / "b"),
                         "--config", config, "--no-previews", "--workers", "2")
        assert first.exit_code == 0 and second.exit_code == 0
        assert "wrote 2 scenes" in first.output
        for path in sorted((tmp_path / "a").rglob("*.dft")):
            assert path.read_bytes() == (tmp_path / "b" / path.relative_to(tmp_path / "a")).read_bytes()

    def test_missing_out_is_usage_error(self):
        assert _invoke("synth", "--scenes", "2").exit_code == 2

    def test_zero_scenes_is_usage_error(self, tmp_path):
        assert _invoke("synth", "--scenes", "0", "--out", str(tmp_path)).exit_code == 2

    def test_scene_count_defaults_to_config(self, tmp_path):
        config = str(save_run_config(tiny_run_config(train_scenes=2, eval_scenes=1), tmp_path / "run.json"))
        train_set = _invoke("synth", "--seed", "3", "--out", str(tmp_path / "train"), "--config", config,
                            "--no-previews")
        eval_set = _invoke("synth", "--eval-set", "--seed", "4", "--out", str(tmp_path / "eval"),
                           "--config", config, "--no-previews")
        assert train_set.exit_code == 0, train_set.output
        assert eval_set.exit_code == 0, eval_set.output
        assert "wrote 2 scenes" in train_set.output
        assert "wrote 1 scenes" in eval_set.output


class TestTrainEvalInfer:

    def test_train_wrote_outputs(self, workspace):
        assert (workspace / "full.ckpt").exists()
        assert (workspace / "full.loss.csv").exists()
        assert (workspace / "full.loss.json").exists()

    def test_volumes_command(self, workspace, tmp_path):
        result = _invoke("volumes", "--data", str(workspace / "data"), "--out", str(tmp_path),
                         "--config", str(workspace / "run.json"))
        assert result.exit_code == 0, result.output
        assert "wrote 4 volumes" in result.output
        assert (tmp_path / "scene_0000" / "c_multi.dft").exists()
        onehot = CueVolume.load(tmp_path / "scene_0000" / "c_mono.dft")
        np.testing.assert_array_equal(onehot.data.sum(axis=-1), 1.0)

    def test_eval(self, workspace, tmp_path):
        result = _invoke("eval", "--data", str(workspace / "data"), "--ckpt", str(workspace / "full.ckpt"),
                         "--out", str(tmp_path), "--no-triptychs")
        assert result.exit_code == 0, result.output
        assert "AbsRel" in result.output
        assert "mask estimated" in result.output
        assert (tmp_path / "metrics.csv").exists()
        assert not (tmp_path / "triptychs").exists()

    def test_eval_as_other_variant(self, workspace, tmp_path):
        result = _invoke("eval", "--data", str(workspace / "data"), "--ckpt", str(workspace / "full.ckpt"),
                         "--out", str(tmp_path), "--variant", "no_R_multi", "--no-triptychs")
        assert result.exit_code == 0, result.output
        assert "fused_no_R_multi" in result.output

    def test_eval_with_duplicate_baseline_is_checked_failure(self, workspace, tmp_path):
        ckpt = str(workspace / "full.ckpt")
        result = _invoke("eval", "--data", str(workspace / "data"), "--ckpt", ckpt, "--baseline", ckpt,
                         "--out", str(tmp_path), "--no-triptychs")
        assert result.exit_code == 1
        assert "error[CHECKPOINT]:" in result.output

    @pytest.mark.parametrize("command", ["eval", "infer"])
    def test_environment_overrides_apply_to_checkpoints(self, workspace, tmp_path, monkeypatch, command):
        monkeypatch.setenv("CUEFUSE_PRECISION", "f16")
        args = ["--data", str(workspace / "data"), "--ckpt", str(workspace / "full.ckpt")]
        if command == "eval":
            args += ["--out", str(tmp_path), "--no-triptychs"]
        else:
            args += ["--triplet", "scene_0000", "--out", str(tmp_path / "p")]
        result = _invoke(command, *args)
        assert result.exit_code == 1
        assert "error[CONFIG]:" in result.output
        assert "CUEFUSE_PRECISION" in result.output

    def test_environment_precision_is_used(self, workspace, tmp_path, monkeypatch):
        monkeypatch.setenv("CUEFUSE_PRECISION", "f64")
        result = _invoke("infer", "--data", str(workspace / "data"), "--triplet", "scene_0000",
                         "--ckpt", str(workspace / "full.ckpt"), "--out", str(tmp_path / "p"))
        assert result.exit_code == 0, result.output

    def test_infer_with_attention(self, workspace, tmp_path):
        result = _invoke("infer", "--data", str(workspace / "data"), "--triplet", "scene_0000",
                         "--ckpt", str(workspace / "full.ckpt"), "--out", str(tmp_path / "p"),
                         "--attention-pixel", "5,6")
        assert result.exit_code == 0, result.output
        assert (tmp_path / "p.dft").exists()
        assert (tmp_path / "p.png").exists()
        assert (tmp_path / "p_attention.png").exists()

    def test_bad_attention_pixel_is_usage_error(self, workspace, tmp_path):
        result = _invoke("infer", "--data", str(workspace / "data"), "--triplet", "scene_0000",
                         "--ckpt", str(workspace / "full.ckpt"), "--out", str(tmp_path / "p"),
                         "--attention-pixel", "five")
        assert result.exit_code == 2

    def test_unknown_scene_is_checked_failure(self, workspace, tmp_path):
        result = _invoke("infer", "--data", str(workspace / "data"), "--triplet", "scene_9999",
                         "--ckpt", str(workspace / "full.ckpt"), "--out", str(tmp_path / "p"))
        assert result.exit_code == 1
        assert "error[DATASET]:" in result.output

    def test_unknown_variant_is_usage_error(self, workspace, tmp_path):
        result = _invoke("train", "--data", str(workspace / "data"), "--out", str(tmp_path / "x.ckpt"),
                         "--variant", "bogus")
        assert result.exit_code == 2


class TestGradcheck:

    def test_single_variant(self, workspace):
        result = _invoke("gradcheck", "--config", str(workspace / "run.json"), "--variant", "full")
        assert result.exit_code == 0, result.output
        assert "max rel err" in result.output
        assert any(line.startswith("full ") for line in result.output.splitlines())

    def test_bad_config_is_checked_failure(self, tmp_path):
        broken = tmp_path / "broken.json"
        broken.write_text('{"M": 3}')
        result = _invoke("gradcheck", "--config", str(broken))
        assert result.exit_code == 1
        assert "error[CONFIG]:" in result.output
