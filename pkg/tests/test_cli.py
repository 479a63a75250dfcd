import os

import numpy as np
import pytest
from click.testing import CliRunner

from cli import cli
from models import LossRecord, MetricRecord, Sample, TrainingRun
from pipeline.images import load_id_map, load_rgb
from pipeline.synth import SyntheticSceneConfig
from titan import load_checkpoint
from titan.config import TrainConfig


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workspace(tmp_path, registry):
    """Scene and training configs small enough for a few CPU steps."""
    SyntheticSceneConfig(beams=16, azimuth_steps=128, max_boxes=2, max_cylinders=2).to_file(tmp_path / "scene.cfg")
    TrainConfig(
        max_steps=2,
        batch_size=2,
        base_width=4,
        num_stages=2,
        disc_base_width=4,
        dropout=0.0,
        log_every=1,
    ).to_file(tmp_path / "train.cfg")
    return tmp_path


def invoke(runner, *args):
    result = runner.invoke(cli, [str(arg) for arg in args], catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def test_synth_train_evaluate(runner, workspace, registry):
    data = workspace / "data"
    scene = workspace / "scene.cfg"
    invoke(runner, "synth-data", "--config", scene, "--count", 2, "--out", data, "--quiet")
    invoke(runner, "synth-data", "--config", scene, "--count", 1, "--out", data, "--split", "val", "--quiet")
    assert sorted(os.listdir(data / "velodyne")) == ["train_00000.bin", "train_00001.bin", "val_00000.bin"]

    ckpt = workspace / "model.ckpt"
    loss_log = workspace / "losses.csv"
    result = invoke(
        runner, "train", "--config", workspace / "train.cfg", "--data", data, "--out", ckpt, "--loss-log", loss_log
    )
    assert "after 2 steps" in result.output
    checkpoint = load_checkpoint(ckpt)
    assert checkpoint.step == 2
    assert (checkpoint.generator.config.input_height, checkpoint.generator.config.input_width) == (16, 32)
    assert (checkpoint.generator.config.output_height, checkpoint.generator.config.output_width) == (64, 128)
    assert len(loss_log.read_text().splitlines()) == 3

    report = workspace / "report.csv"
    result = invoke(runner, "evaluate", "--ckpt", ckpt, "--data", data, "--report", report, "--quiet")
    assert "mIoU" in result.output
    assert report.exists()

    with registry.get_db() as db:
        assert {sample.split for sample in db.query(Sample)} == {"train", "val"}
        assert db.query(Sample).count() == 3
        run = db.query(TrainingRun).one()
        assert run.final_step == 2 and run.checkpoint_path == str(ckpt)
        assert db.query(LossRecord).count() == 2
        assert db.query(MetricRecord).filter_by(name="miou", split="val").count() == 1


def test_translate_and_panorama(runner, workspace):
    data = workspace / "data"
    invoke(runner, "synth-data", "--config", workspace / "scene.cfg", "--count", 2, "--out", data, "--quiet")
    ckpt = workspace / "model.ckpt"
    invoke(runner, "train", "--config", workspace / "train.cfg", "--data", data, "--out", ckpt, "--steps", 1)
    scan, labels = data / "velodyne" / "train_00000.bin", data / "labels" / "train_00000.label"

    out = workspace / "pred.png"
    invoke(runner, "translate", "--ckpt", ckpt, "--scan", scan, "--labels", labels, "--out", out)
    assert load_rgb(str(out)).shape == (64, 128, 3)
    assert load_id_map(str(workspace / "pred_ids.png")).shape == (64, 128)

    out = workspace / "pano.png"
    result = invoke(runner, "panorama", "--ckpt", ckpt, "--scan", scan, "--labels", labels, "--out", out)
    assert "(4x)" in result.output
    assert load_rgb(str(out)).shape == (64, 512, 3)


def test_project(runner, workspace):
    data = workspace / "data"
    invoke(runner, "synth-data", "--config", workspace / "scene.cfg", "--count", 1, "--out", data, "--quiet")
    scan, labels = data / "velodyne" / "train_00000.bin", data / "labels" / "train_00000.label"

    out = workspace / "range.png"
    invoke(runner, "project", scan, "--labels", labels, "--out", out, "--width", 128, "--height", 16)
    assert load_rgb(str(out)).shape == (16, 128, 3)
    assert load_rgb(str(workspace / "range_labels.png")).shape == (16, 128, 3)

    out = workspace / "range.npy"
    invoke(runner, "project", scan, "--out", out, "--width", 128, "--height", 16)
    assert np.load(out).shape == (16, 128, 5)


def test_pipeline_errors_become_cli_failures(runner, workspace):
    empty = workspace / "empty"
    empty.mkdir()
    result = runner.invoke(cli, ["train", "--data", str(empty), "--out", str(workspace / "x.ckpt")])
    assert result.exit_code == 1
    assert "no train samples found" in result.output

    bad = workspace / "bad.cfg"
    bad.write_text("camera_fov_deg=200\n")
    result = runner.invoke(cli, ["synth-data", "--config", str(bad), "--count", "1", "--out", str(workspace / "d")])
    assert result.exit_code == 1
    assert "camera_fov_deg" in result.output


def test_clear(runner, registry):
    with registry.get_db() as db:
        registry.register_sample(db, "e" * 64, "train")
    assert "cleared" in invoke(runner, "clear").output
    with registry.get_db() as db:
        assert db.query(Sample).count() == 0
