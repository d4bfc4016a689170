import functools
import logging
import sys
from pathlib import Path
from typing import List, Tuple

import click
from pydantic import ValidationError

from app.core.checkpoint import load_checkpoint
from app.core.config import get_settings
from app.core.exceptions import ConfigError, ValidationFailure
from app.core.logging_config import configure_logging
from app.core.png_io import write_png
from app.models.dataset import EV_PRESETS, CrfKind, CrfSpec, check_increasing
from app.models.run_config import load_run_config
from app.services.ablation_service import AblationService
from app.services.data_service import FUSED_NAME, DatasetService, format_ev
from app.services.eval_service import (
    EvaluationService,
    ablation_rows,
    write_eval_report,
    write_report,
)
from app.services.fusion_service import FusionService
from app.services.trainer_service import TrainerService, infer

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def exits_with_codes(fn):
    """Map validation failures to exit 2 and every other failure to exit 3."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.exceptions.Exit:
            raise
        except click.ClickException:
            raise
        except (ValidationFailure, ValidationError) as e:
            logger.error(f"{fn.__name__}: Failure - {e}")
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_VALIDATION)
        except Exception as e:
            logger.error(f"{fn.__name__}: Failure - {e}")
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_RUNTIME)

    return wrapper


def parse_size(ctx, param, value: str) -> Tuple[int, int]:
    try:
        width, height = (int(part) for part in value.lower().split("x"))
    except ValueError:
        raise click.BadParameter(f"expected WxH, got {value!r}")
    if width < 1 or height < 1:
        raise click.BadParameter(f"size must be positive, got {value!r}")
    return width, height


def parse_evs(ctx, param, value):
    if value is None:
        return None
    evs: List[float] = []
    for token in value.split(","):
        try:
            evs.append(float(token))
        except ValueError:
            raise click.BadParameter(f"invalid EV token {token.strip()!r}")
    try:
        return check_increasing(evs)
    except ValueError as e:
        raise click.BadParameter(str(e))


@click.group()
@click.option(
    "--threads", type=click.IntRange(min=1), default=None, help="Worker cap (default: LOOPX_THREADS)"
)
@click.option("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
@click.option("--log-format", type=click.Choice(["console", "json"]), default=None)
@click.pass_context
def cli(ctx, threads, log_level, log_format):
    """Exposure correction trained against its own fused pseudo-labels"""
    try:
        settings = get_settings()
    except ValidationError as e:
        click.echo(f"error: invalid LOOPX_* environment: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    configure_logging(log_level or settings.log_level, log_format or settings.log_format)
    ctx.ensure_object(dict)
    ctx.obj["threads"] = settings.resolved_threads(threads)


@cli.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--scenes", "n_scenes", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--size", callback=parse_size, default="64x64", show_default=True, help="WxH")
@click.option("--evs", callback=parse_evs, default=None, help="Comma-separated, increasing")
@click.option("--preset", type=click.Choice(sorted(EV_PRESETS)), default="standard", show_default=True)
@click.option("--crf", type=click.Choice([k.value for k in CrfKind]), default="gamma", show_default=True)
@click.option("--gamma", type=float, default=2.2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--drop-zero-ev", is_flag=True, help="Leave the EV 0 frame out of the inputs")
@click.pass_context
@exits_with_codes
def synth(ctx, out_dir, n_scenes, size, evs, preset, crf, gamma, seed, drop_zero_ev):
    """Render a seeded synthetic corpus with ground truth"""
    width, height = size
    evs = evs or list(EV_PRESETS[preset])
    service = DatasetService(ctx.obj["threads"])
    scenes = service.synthesize(
        n_scenes,
        width,
        height,
        evs,
        crf=CrfSpec(kind=CrfKind(crf), gamma=gamma),
        seed=seed,
        drop_zero_ev=drop_zero_ev,
    )
    records = service.save_dataset(out_dir, scenes)
    for record in records:
        click.echo(f"{record.scene_id} {','.join(format_ev(ev) for ev in record.evs)}")
    click.echo(f"✓ Wrote {len(records)} scenes to {out_dir}")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.pass_context
@exits_with_codes
def train(ctx, config_path):
    """Warm-up plus joint rounds; checkpoints and run_log.csv go to output_root"""
    run = load_run_config(config_path)
    threads = ctx.obj["threads"]
    scenes = DatasetService(threads).load_scenes(run.data_root)
    trainer = TrainerService(
        train_cfg=run.effective_train,
        loss_cfg=run.loss,
        fusion_params=run.fusion,
        dims=run.model,
        threads=threads,
        out_dir=run.output_root,
    )
    state, reports = trainer.train(scenes)
    for report in reports:
        trend = "n/a" if report.decreasing_fraction is None else f"{report.decreasing_fraction:.2f}"
        click.echo(
            f"round {report.round_index}: loss {report.mean_loss:.6f} "
            f"drift {report.mean_drift:.6f} decreasing {trend}"
        )
    click.echo(f"✓ Trained {state.step} steps, checkpoints in {run.output_root}")


def _check_separate(in_dir: Path, out_path: Path) -> None:
    if out_path.resolve() == in_dir.resolve() or in_dir.resolve() in out_path.resolve().parents:
        raise ConfigError(f"output {out_path} must not be inside input folder {in_dir}")


@cli.command()
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False, exists=True, path_type=Path))
@click.option(
    "--in", "in_dir", required=True, type=click.Path(file_okay=False, exists=True, path_type=Path)
)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.pass_context
@exits_with_codes
def correct(ctx, ckpt, in_dir, out_dir):
    """Correct every image of a sequence folder; fuse them when there is more than one"""
    _check_separate(in_dir, out_dir)
    params = load_checkpoint(ckpt)
    names, seq = DatasetService(ctx.obj["threads"]).read_sequence_folder(in_dir)
    corrected, final = infer(params, seq.images)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, img in zip(names, corrected):
        write_png(out_dir / f"{name}.png", img)
    if len(corrected) > 1:
        write_png(out_dir / FUSED_NAME, final)
    click.echo(f"✓ Corrected {len(corrected)} image(s) into {out_dir}")


@cli.command()
@click.option(
    "--in", "in_dir", required=True, type=click.Path(file_okay=False, exists=True, path_type=Path)
)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.pass_context
@exits_with_codes
def fuse(ctx, in_dir, out_path):
    """Rule-based fusion of a sequence folder into one PNG"""
    _check_separate(in_dir, out_path)
    _, seq = DatasetService(ctx.obj["threads"]).read_sequence_folder(in_dir)
    fused = FusionService().fuse(seq.images)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_png(out_path, fused)
    click.echo(f"✓ Fused {len(seq)} image(s) into {out_path}")


@cli.command("eval")
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False, exists=True, path_type=Path))
@click.option(
    "--data", "data_root", required=True, type=click.Path(file_okay=False, exists=True, path_type=Path)
)
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.pass_context
@exits_with_codes
def evaluate(ctx, ckpt, data_root, report_path):
    """SEC and MEF PSNR/SSIM against ground truth; CSV plus an aligned .txt table"""
    threads = ctx.obj["threads"]
    params = load_checkpoint(ckpt)
    scenes = DatasetService(threads).load_scenes(data_root)
    report = EvaluationService(threads=threads).evaluate(params, scenes, with_baseline=True)
    write_eval_report(report_path, report)
    click.echo(f"✓ Evaluated {len(scenes)} scenes, report at {report_path}")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.pass_context
@exits_with_codes
def ablate(ctx, config_path, report_path):
    """Schedule and ranking-loss variants side by side, with the fusion baseline"""
    run = load_run_config(config_path)
    threads = ctx.obj["threads"]
    scenes = DatasetService(threads).load_scenes(run.data_root)
    report = AblationService(run, threads).run(scenes, out_root=run.output_root)
    write_report(report_path, ablation_rows(report))
    click.echo(f"✓ Ablation of {len(report.rows)} settings, report at {report_path}")
