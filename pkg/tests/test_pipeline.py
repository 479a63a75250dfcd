import math
import os
from dataclasses import replace

import numpy as np
import pytest

from exceptions import ConfigurationError, DataFormatError, MetricError, TensorError
from geometry import PointCloud, RangeImage
from labels import FULL, UNLABELED, class_id
from pipeline import (
    PairedSample,
    SyntheticSceneConfig,
    batch_source,
    evaluate,
    load_dataset,
    load_sample,
    make_batch,
    render_panorama,
    save_sample,
    synth_scene,
    translate,
)
from pipeline.images import load_id_map, load_rgb, save_id_map, save_range_image, save_rgb, save_segment_map
from pipeline.inference import wrap_margin
from titan import build_generator
from utils import philox


@pytest.fixture
def samples(tiny_scene):
    return [synth_scene(tiny_scene.with_seed(seed)) for seed in (11, 12)]


@pytest.fixture
def generator(tiny_generator_config, rng):
    return build_generator(tiny_generator_config, rng, init="he", dtype=np.float64)


def rolled(range_image, shift):
    return RangeImage(
        np.roll(range_image.data, shift, axis=1),
        np.roll(range_image.valid, shift, axis=1),
        range_image.config,
        np.roll(range_image.labels, shift, axis=1),
    )


def test_translate_returns_a_camera_map(generator, samples):
    sample = samples[0]
    segment_map = translate(generator, sample.range_crop, sample.lidar_labels)
    assert segment_map.shape == (16, 32)
    assert set(np.unique(segment_map)) <= set(generator.config.class_ids)
    assert generator.training


def test_zero_generator_translates_to_unlabeled(tiny_generator_config, rng, samples):
    generator = build_generator(tiny_generator_config, rng, init="zeros")
    segment_map = translate(generator, samples[0].range_crop, samples[0].lidar_labels)
    assert np.all(segment_map == UNLABELED)


def test_translate_rejects_other_crop_sizes(generator, samples):
    sample = samples[0]
    with pytest.raises(TensorError, match="training crop"):
        translate(generator, sample.range_crop[:, :, :16], sample.lidar_labels[:, :16])


def test_panorama_covers_the_whole_scan(generator, samples):
    full = samples[0].full_range_image()
    panorama = render_panorama(generator, full)
    assert panorama.width_ratio == 4
    assert panorama.segment_map.shape == (16, 128)
    assert panorama.image.shape == (16, 128, 3)
    assert wrap_margin(generator) % generator.config.downsampling == 0
    assert wrap_margin(generator) >= generator.receptive_field_radius()


def test_panorama_has_no_seam(generator, samples):
    # a circular shift by whole pooling cells shifts the prediction by the same amount
    full = samples[0].full_range_image()
    base = render_panorama(generator, full).segment_map
    for shift in (4, 64):
        shifted = render_panorama(generator, rolled(full, shift)).segment_map
        np.testing.assert_array_equal(shifted, np.roll(base, shift, axis=1))


@pytest.mark.parametrize("seed", range(10))
def test_panorama_agrees_with_the_crop_away_from_its_edges(tiny_generator_config, seed):
    scene = SyntheticSceneConfig(
        beams=16, azimuth_steps=512, image_height=16, image_width=128, max_boxes=2, max_cylinders=2
    ).validate()
    sample = synth_scene(scene.with_seed(seed))
    config = replace(tiny_generator_config, input_width=128, output_width=128).validate()
    generator = build_generator(config, philox(seed), init="he", dtype=np.float64)

    crop = translate(generator, sample.range_crop, sample.lidar_labels)
    panorama = render_panorama(generator, sample.full_range_image())
    start = sample.crop().column_offset
    margin = generator.receptive_field_radius()
    assert panorama.width_ratio == 4
    np.testing.assert_array_equal(
        panorama.segment_map[:, start + margin : start + 128 - margin], crop[:, margin : 128 - margin]
    )


def test_panorama_errors(generator, samples):
    full = samples[0].full_range_image()
    unlabeled = RangeImage(full.data, full.valid, full.config)
    with pytest.raises(ConfigurationError, match="LiDAR segment map"):
        render_panorama(generator, unlabeled)
    with pytest.raises(TensorError, match="multiple"):
        render_panorama(generator, full.take_columns(np.arange(48)))
    with pytest.raises(TensorError, match="height"):
        half = RangeImage(full.data[:8], full.valid[:8], full.config, full.labels[:8])
        render_panorama(generator, half)


def test_ground_truth_predictor_scores_perfectly(samples):
    report = evaluate(samples, lambda sample: sample.camera_labels, swd_resolution=32, n_projections=8, quiet=True)
    assert report.miou == 1.0
    assert report.ssim == pytest.approx(1.0)
    assert [resolution for resolution, _ in report.swd_per_level] == [32, 16]
    assert all(value == 0.0 for _, value in report.swd_per_level)
    assert report.frechet == pytest.approx(0.0, abs=1e-9)


def test_constant_predictor_scores_poorly(samples):
    def road(sample):
        return np.full(sample.camera_size, class_id("Road"))

    report = evaluate(samples, road, swd_resolution=32, n_projections=8, quiet=True)
    assert report.miou < 1.0
    assert report.ssim < 1.0
    assert report.swd_avg > 0.0


def test_evaluate_a_generator(tiny_generator_config, rng, samples):
    generator = build_generator(tiny_generator_config, rng, init="zeros")
    report = evaluate(samples[:1], generator, swd_resolution=16, n_projections=4, quiet=True)
    assert report.miou == 0.0
    assert report.frechet is None


def test_evaluate_input_checks(samples):
    with pytest.raises(MetricError, match="empty"):
        evaluate([], lambda sample: sample.camera_labels)
    with pytest.raises(MetricError, match="does not match"):
        evaluate(samples, lambda sample: np.zeros((4, 4), dtype=np.int64), quiet=True)


def test_sample_file_round_trip(tmp_path, samples):
    sample = samples[0]
    path = tmp_path / "train_00000.npz"
    save_sample(path, sample)
    loaded = load_sample(path)
    assert loaded.hash() == sample.hash()
    assert loaded.seed == sample.seed
    assert loaded.projection == sample.projection
    assert loaded.horizontal_fov == pytest.approx(sample.horizontal_fov)
    np.testing.assert_array_equal(loaded.rgb, sample.rgb)


def test_broken_sample_files(tmp_path):
    path = tmp_path / "train_00000.npz"
    path.write_bytes(b"garbage")
    with pytest.raises(DataFormatError, match="cannot read sample"):
        load_sample(path)
    with pytest.raises(DataFormatError, match="no test samples"):
        load_dataset(str(tmp_path), "test")


def test_paired_sample_validation(samples):
    sample = samples[0]
    with pytest.raises(DataFormatError, match="labelled cloud"):
        PairedSample(PointCloud(sample.cloud.points), sample.camera_labels, sample.projection)
    with pytest.raises(DataFormatError, match="2-D"):
        PairedSample(sample.cloud, sample.camera_labels[0], sample.projection)
    with pytest.raises(DataFormatError, match="rgb shape"):
        PairedSample(sample.cloud, sample.camera_labels, sample.projection, rgb=np.zeros((2, 2, 3)))


def test_crop_matches_the_camera_field_of_view(samples):
    sample = samples[0]
    assert sample.horizontal_fov == pytest.approx(math.pi / 2)
    assert sample.range_crop.shape[2] == sample.full_range_image().width // 4
    assert sample.crop().column_offset == 48


def test_make_batch_without_augmentation(samples):
    subset = FULL
    batch = make_batch(samples, subset)
    assert batch.range_view.shape == (2, 5, 16, 32)
    assert batch.range_view.dtype == np.float32
    np.testing.assert_array_equal(batch.camera_labels[0], subset.compact(samples[0].camera_labels))
    np.testing.assert_array_equal(batch.lidar_labels[1], subset.compact(samples[1].lidar_labels))
    with pytest.raises(DataFormatError):
        make_batch([], subset)


def test_batch_source_draws_configured_batches(samples, tiny_train_config):
    config = replace(tiny_train_config, batch_size=3)
    next_batch = batch_source(samples, FULL, config)
    first, second = next_batch(philox(3)), next_batch(philox(3))
    assert first.range_view.shape == (3, 5, 16, 32)
    assert first.range_view.dtype == np.float64
    np.testing.assert_array_equal(first.camera_labels, second.camera_labels)
    with pytest.raises(DataFormatError, match="empty"):
        batch_source([], FULL, config)


def test_image_round_trips(tmp_path, samples):
    sample = samples[0]
    rgb_path = str(tmp_path / "out" / "camera.png")
    save_rgb(rgb_path, sample.rgb)
    np.testing.assert_array_equal(load_rgb(rgb_path), sample.rgb)

    for name in ("ids.png", "ids.npy"):
        path = str(tmp_path / name)
        save_id_map(path, sample.camera_labels)
        np.testing.assert_array_equal(load_id_map(path), sample.camera_labels)

    color, ids = save_segment_map(str(tmp_path / "pred.png"), sample.camera_labels)
    assert ids.endswith("pred_ids.png") and os.path.exists(color)
    np.testing.assert_array_equal(load_id_map(ids), sample.camera_labels)

    save_range_image(str(tmp_path / "range.png"), sample.full_range_image())
    assert load_rgb(str(tmp_path / "range_labels.png")).shape == (16, 128, 3)


def test_image_helpers_reject_bad_input(tmp_path):
    with pytest.raises(DataFormatError, match="image"):
        save_rgb(str(tmp_path / "x.png"), np.zeros((4, 4)))
    with pytest.raises(DataFormatError, match="cannot read image"):
        load_rgb(str(tmp_path / "missing.png"))
