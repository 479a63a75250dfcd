# cli.py

import math
import os
from dataclasses import asdict
from functools import wraps

import click
import numpy as np

from config import Config
from database import clear_db, finish_run, get_db, init_db, record_loss, record_metrics, register_sample, start_run
from exceptions import TitanError
from geometry import ProjectionConfig, crop_to_camera_fov, project_cloud
from logger import log_config, logger
from pipeline import (
    SyntheticSceneConfig,
    batch_source,
    evaluate as evaluate_dataset,
    generate_split,
    load_dataset,
    load_labelled_scan,
    render_panorama,
    translate as translate_crop,
)
from pipeline.images import save_id_map, save_range_image, save_rgb, save_segment_map
from titan import Trainer, build_models, load_checkpoint, save_checkpoint
from titan.config import TrainConfig
from utils import make_rng


def handle_errors(func):
    """Report pipeline errors as a clean CLI failure."""

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except TitanError as e:
            logger.error(e.message)
            raise click.ClickException(e.message)

    return wrapper


def projection_options(func):
    for option in reversed(
        [
            click.option("--width", type=int, default=None, help="Range-view width (azimuth bins)."),
            click.option("--height", type=int, default=None, help="Range-view height (beams)."),
            click.option("--fov-up", type=float, default=3.0, show_default=True, help="Upward FOV, degrees."),
            click.option("--fov-down", type=float, default=25.0, show_default=True, help="Downward FOV, degrees."),
        ]
    ):
        func = option(func)
    return func


@click.group()
def cli():
    """LiDAR range-view to camera segment-map translation"""
    pass


@cli.command()
@click.argument("scan", type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "label_path", type=click.Path(exists=True, dir_okay=False), help="SemanticKITTI .label file.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output image (.png) or raw array (.npy).")
@projection_options
@handle_errors
def project(scan, label_path, out, width, height, fov_up, fov_down):
    """Project a scan onto the spherical range view."""
    cloud = load_labelled_scan(scan, label_path)
    config = ProjectionConfig.from_degrees(width or 2048, height or 64, fov_up, fov_down)
    range_image = project_cloud(cloud, config)
    if out.endswith(".npy"):
        np.save(out, range_image.data)
    else:
        save_range_image(out, range_image)
    click.echo(f"Projected {len(cloud)} points onto a {config.height}x{config.width} range view: {out}")


@cli.command("synth-data")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Scene config file.")
@click.option("--count", required=True, type=int, help="Number of samples.")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="train", show_default=True)
@click.option("--base-seed", type=int, default=0, show_default=True, help="First seed inside the split's block.")
@click.option("--workers", type=int, default=4, show_default=True, help="Concurrent scene renders.")
@click.option("--quiet", is_flag=True, help="Hide the progress bar.")
@handle_errors
def synth_data(config_path, count, out, split, base_seed, workers, quiet):
    """Generate synthetic paired scenes for one split."""
    config = SyntheticSceneConfig.from_file(config_path) if config_path else SyntheticSceneConfig().validate()
    log_config(f"Scene config ({split})", config)
    written = generate_split(config, split, count, out, base_seed, workers, quiet)
    with get_db() as db:
        for name, sample in written:
            register_sample(db, sample.hash(), split, sample.seed, os.path.join(out, f"{name}.npz"))
    click.echo(f"Wrote {len(written)} {split} samples to {out}")


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Training config file.")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Checkpoint path.")
@click.option("--steps", type=int, default=None, help="Override max_steps.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--loss-log", type=click.Path(dir_okay=False), default=None, help="Per-step CSV loss log.")
@click.option("--quiet", is_flag=True, help="Hide the progress bar.")
@handle_errors
def train(config_path, data_dir, out, steps, seed, loss_log, quiet):
    """Train the generator and critic on the train split of a data directory."""
    config = TrainConfig.from_file(config_path) if config_path else TrainConfig().validate()
    config = config.with_overrides(seed=seed, max_steps=steps)
    config = config.with_overrides(seed=Config.resolve_seed(config.seed))
    log_config("Training config", config)
    samples = load_dataset(data_dir, "train")
    rng = make_rng(config.seed)
    generator, discriminator = build_models(config, samples[0].lidar_labels.shape, samples[0].camera_size, rng)

    if loss_log:
        open(loss_log, "w").close()
    with get_db() as db:
        run_id = start_run(db, config.seed, _config_text(config), data_dir).id

    def on_report(step, report):
        with get_db() as db:
            record_loss(db, run_id, step, report)

    trainer = Trainer(generator, discriminator, config, rng, loss_log=loss_log, on_report=on_report)
    trainer.fit(batch_source(samples, config.subset, config), quiet=quiet)
    save_checkpoint(out, generator, discriminator, trainer.opt_g, trainer.opt_d, trainer.step)
    with get_db() as db:
        finish_run(db, run_id, trainer.step, out)
    click.echo(f"Saved checkpoint after {trainer.step} steps to {out}")


def _config_text(config):
    return "\n".join(f"{name}={value}" for name, value in asdict(config).items())


def _scan_range_image(generator_config, scan, label_path, width, height, fov_up, fov_down, horizontal_fov):
    cloud = load_labelled_scan(scan, label_path)
    if width is None:
        width = int(round(generator_config.input_width * 2 * math.pi / horizontal_fov))
    config = ProjectionConfig.from_degrees(width, height or generator_config.input_height, fov_up, fov_down)
    return project_cloud(cloud, config)


@cli.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--scan", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "label_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--azimuth", type=float, default=0.0, show_default=True, help="Camera heading, degrees.")
@click.option("--fov", type=float, default=90.0, show_default=True, help="Camera horizontal FOV, degrees.")
@projection_options
@handle_errors
def translate(ckpt, scan, label_path, out, azimuth, fov, width, height, fov_up, fov_down):
    """Translate the camera-facing crop of a scan into a camera segment map."""
    generator = load_checkpoint(ckpt).generator
    horizontal_fov = math.radians(fov)
    full = _scan_range_image(generator.config, scan, label_path, width, height, fov_up, fov_down, horizontal_fov)
    crop = crop_to_camera_fov(full, math.radians(azimuth), horizontal_fov)
    segment_map = translate_crop(generator, crop.channels_first(), crop.labels)
    rgb_path, ids_path = save_segment_map(out, segment_map)
    click.echo(f"Wrote {rgb_path} and {ids_path}")


@cli.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--scan", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "label_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--fov", type=float, default=90.0, show_default=True, help="Training crop FOV, degrees.")
@projection_options
@handle_errors
def panorama(ckpt, scan, label_path, out, fov, width, height, fov_up, fov_down):
    """Render a 360-degree camera segment panorama from a full scan."""
    generator = load_checkpoint(ckpt).generator
    full = _scan_range_image(generator.config, scan, label_path, width, height, fov_up, fov_down, math.radians(fov))
    result = render_panorama(generator, full)
    stem, _ = os.path.splitext(out)
    save_rgb(out, result.image)
    save_id_map(f"{stem}_ids.png", result.segment_map)
    click.echo(f"Wrote a {result.segment_map.shape[1]}-column panorama ({result.width_ratio}x) to {out}")


@cli.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False), help="CSV report path.")
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="val", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Seed of the SWD draws.")
@click.option("--quiet", is_flag=True, help="Hide the progress bar.")
@handle_errors
def evaluate(ckpt, data_dir, report_path, split, seed, quiet):
    """Score a checkpoint on one split and write the CSV report."""
    generator = load_checkpoint(ckpt).generator
    samples = load_dataset(data_dir, split)
    report = evaluate_dataset(samples, generator, seed=Config.resolve_seed(seed), quiet=quiet)
    report.to_csv(report_path)
    with get_db() as db:
        record_metrics(db, report, split=split, checkpoint_path=ckpt)
    click.echo(report.to_table())


@cli.command()
def clear():
    """Clear the run registry."""
    removed = clear_db()
    click.echo("Run registry cleared: " + ", ".join(f"{count} {table}" for table, count in removed.items()))


if __name__ == "__main__":
    init_db()
    cli()
