"""
cuefuse command line - dataset generation, volumes, training, evaluation, inference, gradient checks

USAGE:
  uv run python scripts/cuefuse.py synth --seed 0 --out data/train
  uv run python scripts/cuefuse.py synth --eval-set --seed 1 --out data/eval
  uv run python scripts/cuefuse.py train --data data/train --out runs/full.ckpt
  uv run python scripts/cuefuse.py eval --data data/eval --ckpt runs/full.ckpt --out runs/eval
  uv run python scripts/cuefuse.py infer --data data/eval --triplet scene_0003 --ckpt runs/full.ckpt --out runs/scene_0003
  uv run python scripts/cuefuse.py gradcheck

Exit codes: 0 ok, 1 checked failure (``error[<CODE>]: <message>`` on stderr), 2 usage.
"""

import logging
import os
import sys
from functools import wraps
from pathlib import Path

import click
from dotenv import load_dotenv

from tools.config import RunConfig, apply_env_overrides, load_run_config
from tools.errors import CueFuseError, GradCheckError
from tools.fusion import FusionVariant

logger = logging.getLogger("cuefuse")

VARIANTS = [v.value for v in FusionVariant]


def _fail_cleanly(command):
    """Turn checked failures into one machine-parsable line and exit status 1."""
    @wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except CueFuseError as exc:
            click.echo(exc.one_line(), err=True)
            sys.exit(1)
    return wrapper


def _deterministic(ctx: click.Context, cfg: RunConfig) -> RunConfig:
    if ctx.obj.get("deterministic") and cfg.workers != 1:
        logger.info("Deterministic mode: forcing one worker (config asked for %d)", cfg.workers)
        cfg = cfg.model_copy(update={"workers": 1})
    return cfg


def _run_config(ctx: click.Context, config_path) -> RunConfig:
    return _deterministic(ctx, load_run_config(config_path))


def _checkpoint(ctx: click.Context, ckpt_path, variant=None):
    """Parameters and the RunConfig stored with them, with environment overrides applied."""
    from pipeline.checkpoint import load_checkpoint

    params, cfg = load_checkpoint(ckpt_path, variant=variant)
    return params, _deterministic(ctx, apply_env_overrides(cfg, os.environ))


@click.group()
@click.option("--log-level", default="INFO", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.option("--deterministic", is_flag=True, help="Force single-worker execution.")
@click.pass_context
def cli(ctx: click.Context, log_level: str, deterministic: bool):
    """Cross-cue fusion of multi-frame and monocular depth."""
    load_dotenv()
    logging.basicConfig(level=log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    ctx.ensure_object(dict)
    ctx.obj["deterministic"] = deterministic


@cli.command()
@click.option("--scenes", type=click.IntRange(min=1),
              help="Scene count (default: the config's train_scenes, or eval_scenes with --eval-set).")
@click.option("--eval-set", is_flag=True, help="Take the default scene count from eval_scenes.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path),
              help="Run config whose resolution and depth range the scenes use.")
@click.option("--shift", is_flag=True, help="Render the off-distribution split (lens, texture, camera speed).")
@click.option("--workers", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--no-previews", is_flag=True, help="Skip PNG previews next to the DFT1 rasters.")
@click.pass_context
@_fail_cleanly
def synth(ctx, scenes, eval_set, seed, out_dir, config_path, shift, workers, no_previews):
    """Render a synthetic dynamic-scene dataset."""
    from tools.synthdata import generate_dataset

    cfg = _run_config(ctx, config_path)
    if scenes is None:
        scenes = cfg.eval_scenes if eval_set else cfg.train_scenes
    settings = cfg.scene_settings()
    if shift:
        settings = settings.shifted()
    if ctx.obj["deterministic"]:
        workers = 1
    manifest = generate_dataset(
        scenes, seed, out_dir, settings=settings, split="shift" if shift else "default",
        workers=workers, previews=not no_previews,
    )
    moving = sum(1 for s in manifest.scenes if s.dynamic_pixels)
    click.echo(f"wrote {len(manifest.scenes)} scenes ({moving} with movers) to {out_dir}")


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path))
@click.pass_context
@_fail_cleanly
def volumes(ctx, data_dir, out_dir, config_path):
    """Build and cache C_multi / C_mono for every scene."""
    from pipeline.volume_cache import write_volume_cache

    cfg = _run_config(ctx, config_path)
    written = write_volume_cache(data_dir, out_dir, cfg, workers=cfg.workers)
    click.echo(f"wrote {len(written)} volumes to {out_dir}")


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--variant", type=click.Choice(VARIANTS), help="Override the config's fusion variant.")
@click.option("--volumes", "cache_dir", type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="Cached volumes written by the volumes command.")
@click.option("--loss-log", type=click.Path(dir_okay=False, path_type=Path),
              help="CSV loss log (default: next to the checkpoint).")
@click.pass_context
@_fail_cleanly
def train(ctx, data_dir, out_path, config_path, variant, cache_dir, loss_log):
    """Train the fusion module and write a checkpoint plus a loss log."""
    from pipeline.trainer import train as run_training

    cfg = _run_config(ctx, config_path)
    if variant:
        cfg = cfg.with_variant(FusionVariant(variant))
    loss_log = loss_log or out_path.with_suffix(".loss.csv")
    result = run_training(data_dir, cfg, out_path, loss_log=loss_log, cache_dir=cache_dir)
    click.echo(f"trained {cfg.fusion.variant.value}: {result.steps} steps, final loss {result.final_loss:.4f}")
    click.echo(f"checkpoint: {result.checkpoint}")
    click.echo(f"loss log:   {result.loss_log}")


@cli.command(name="eval")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path),
              help="Report directory (default: <ckpt>.eval next to the checkpoint).")
@click.option("--variant", type=click.Choice(VARIANTS), help="Evaluate the checkpoint as another variant.")
@click.option("--max-depth", type=click.FloatRange(min=0, min_open=True),
              help="Upper end of the evaluated depth range (default from the run config).")
@click.option("--volumes", "cache_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--baseline", "baseline_paths", multiple=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Another checkpoint (e.g. plain_concat) scored and reduced alongside.")
@click.option("--no-triptychs", is_flag=True)
@click.pass_context
@_fail_cleanly
def evaluate(ctx, data_dir, ckpt_path, out_dir, variant, max_depth, cache_dir, baseline_paths, no_triptychs):
    """Metrics on the overall and dynamic splits, error reduction and mask quality."""
    from pipeline.evaluation import evaluate as run_evaluation
    from tools.report_renderer import render_error_reduction, render_metric_table

    params, cfg = _checkpoint(ctx, ckpt_path, variant)
    baselines = [_checkpoint(ctx, path) for path in baseline_paths]
    depth_range = (cfg.eval_range[0], max_depth) if max_depth else None
    out_dir = out_dir or ckpt_path.with_suffix(".eval")
    result = run_evaluation(
        data_dir, params, cfg, out_dir=out_dir, cache_dir=cache_dir,
        depth_range=depth_range, triptychs=not no_triptychs, baselines=baselines,
    )
    click.echo(render_metric_table(result.reports))
    for reduction in result.reductions:
        click.echo(render_error_reduction(reduction))
    for score in result.masks:
        click.echo(f"mask {score.name}: pooled IoU {score.pooled_iou:.3f}, mean IoU {score.mean_iou:.3f}")
    click.echo(f"reports in {out_dir}")


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--triplet", "scene_id", required=True, help="Scene id from the dataset manifest.")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--attention-pixel", help="Also export attention rows for pixel 'u,v'.")
@click.pass_context
@_fail_cleanly
def infer(ctx, data_dir, scene_id, ckpt_path, out_path, attention_pixel):
    """Predict depth for one scene (DFT1 + PNG)."""
    from pipeline.inference import infer_scene, parse_pixel

    pixel = None
    if attention_pixel:
        try:
            pixel = parse_pixel(attention_pixel)
        except ValueError as exc:
            raise click.BadParameter(str(exc), param_hint="--attention-pixel")
    params, cfg = _checkpoint(ctx, ckpt_path)
    output = infer_scene(data_dir, scene_id, params, cfg, out_path, attention_pixel=pixel)
    click.echo(f"depth {output.shape[0]}x{output.shape[1]}: {output.depth_path}")
    click.echo(f"preview: {output.preview_path}")
    if output.attention_path:
        click.echo(f"attention: {output.attention_path}")


@cli.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--variant", "variants", multiple=True, type=click.Choice(VARIANTS),
              help="Restrict the check to these variants (default: all).")
@click.pass_context
@_fail_cleanly
def gradcheck(ctx, config_path, variants):
    """Compare tape gradients with finite differences (exits 1 on failure)."""
    from pipeline.gradcheck import run_gradcheck

    cfg = _run_config(ctx, config_path)
    reports = run_gradcheck(cfg, [FusionVariant(v) for v in variants] or None)
    worst = 0.0
    failed = []
    for name, report in reports.items():
        click.echo(f"{name:<26} {report.summary()}")
        worst = max(worst, report.max_rel_error)
        if not report.passed:
            failed.append(name)
    click.echo(f"max rel err {worst:.3e}")
    if failed:
        raise GradCheckError(f"gradients disagree with finite differences for {', '.join(failed)}")


def main():
    cli(obj={})


if __name__ == "__main__":
    main()
