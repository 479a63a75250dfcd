# pipeline/dataset.py

import math
import os
from dataclasses import dataclass
from glob import glob
from typing import Optional

import numpy as np

from exceptions import ConfigurationError, DataFormatError
from geometry import PointCloud, ProjectionConfig, RangeImage, crop_to_camera_fov, project_cloud
from labels import check_segment_map
from logger import logger
from titan.augment import augment
from titan.trainer import Batch
from utils import sample_hash

SPLITS = ("train", "val", "test")
SPLIT_SEED_SPAN = 1_000_000


@dataclass
class PairedSample:
    """
    A labelled LiDAR scan with the camera segment map seen from the same pose.

    The camera looks along ``center_azimuth`` and covers ``horizontal_fov`` radians;
    the range crop is the matching column slab of the projected scan.
    """

    cloud: PointCloud
    camera_labels: np.ndarray
    projection: ProjectionConfig
    center_azimuth: float = 0.0
    horizontal_fov: float = math.pi / 2
    rgb: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.cloud.labels is None:
            raise DataFormatError("paired sample needs a labelled cloud")
        self.camera_labels = check_segment_map(self.camera_labels)
        if self.camera_labels.ndim != 2:
            raise DataFormatError(f"camera labels must be 2-D, got shape {self.camera_labels.shape}")
        if self.rgb is not None:
            self.rgb = np.asarray(self.rgb, dtype=np.uint8)
            if self.rgb.shape != self.camera_labels.shape + (3,):
                raise DataFormatError(
                    f"rgb shape {self.rgb.shape} does not match camera labels {self.camera_labels.shape}"
                )

    @property
    def camera_size(self):
        return self.camera_labels.shape

    def full_range_image(self) -> RangeImage:
        return project_cloud(self.cloud, self.projection)

    def crop(self) -> RangeImage:
        return crop_to_camera_fov(self.full_range_image(), self.center_azimuth, self.horizontal_fov)

    @property
    def range_crop(self):
        """(5, h', w') range crop p'."""
        return self.crop().channels_first()

    @property
    def lidar_labels(self):
        """(h', w') LiDAR segment map p'_s in shared ids."""
        return self.crop().labels

    def hash(self):
        return sample_hash(self.cloud.points, self.cloud.labels, self.camera_labels)


def save_sample(path, sample: PairedSample):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    projection = sample.projection
    arrays = {
        "points": sample.cloud.points,
        "point_labels": sample.cloud.labels,
        "camera_labels": sample.camera_labels,
        "projection": np.array(
            [projection.width, projection.height, projection.fov_up, projection.fov_down], dtype=np.float64
        ),
        "camera_pose": np.array([sample.center_azimuth, sample.horizontal_fov], dtype=np.float64),
        "seed": np.array(-1 if sample.seed is None else sample.seed, dtype=np.int64),
    }
    if sample.rgb is not None:
        arrays["rgb"] = sample.rgb
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_sample(path) -> PairedSample:
    try:
        with np.load(path) as data:
            width, height, fov_up, fov_down = data["projection"]
            center_azimuth, horizontal_fov = data["camera_pose"]
            seed = int(data["seed"])
            return PairedSample(
                cloud=PointCloud(data["points"], data["point_labels"]),
                camera_labels=data["camera_labels"],
                projection=ProjectionConfig(int(width), int(height), float(fov_up), float(fov_down)),
                center_azimuth=float(center_azimuth),
                horizontal_fov=float(horizontal_fov),
                rgb=data["rgb"] if "rgb" in data.files else None,
                seed=None if seed < 0 else seed,
            )
    except (OSError, KeyError, ValueError) as e:
        raise DataFormatError(f"cannot read sample {path}: {e}")


def sample_name(split, index):
    return f"{split}_{index:05d}"


def sample_paths(directory, split=None):
    pattern = f"{split}_*.npz" if split else "*.npz"
    return sorted(glob(os.path.join(directory, pattern)))


def load_dataset(directory, split=None):
    """
    Load every sample of ``split`` (or all samples) from a data directory.

    :raises DataFormatError: when no sample is found
    """
    paths = sample_paths(directory, split)
    if not paths:
        what = f"{split} samples" if split else "samples"
        raise DataFormatError(f"no {what} found in {directory}")
    logger.info(f"Loading {len(paths)} samples from {directory}")
    return [load_sample(path) for path in paths]


def split_seeds(split, count, base_seed=0):
    """
    Scene seeds for a split; each split owns its own block of SPLIT_SEED_SPAN seeds.

    :raises ConfigurationError: unknown split or a request that leaves the block
    """
    if split not in SPLITS:
        raise ConfigurationError(f"unknown split '{split}', expected one of {SPLITS}")
    if count < 0 or base_seed < 0 or base_seed + count > SPLIT_SEED_SPAN:
        raise ConfigurationError(
            f"seeds {base_seed}..{base_seed + count} do not fit the {SPLIT_SEED_SPAN}-seed block of a split"
        )
    start = SPLITS.index(split) * SPLIT_SEED_SPAN + base_seed
    return list(range(start, start + count))


def encode_sample(sample: PairedSample, subset, rng=None, config=None):
    """
    Augment (when ``config`` is given), project and crop one sample.

    :return: Tuple (range crop (5, h', w'), LiDAR channel grid, camera channel grid)
    """
    cloud, camera_labels, center = sample.cloud, sample.camera_labels, sample.center_azimuth
    if config is not None:
        cloud, camera_labels, flipped = augment(
            cloud,
            rng,
            config.flip_prob,
            config.drop_prob,
            config.max_drop_fraction,
            camera_labels=camera_labels,
        )
        if flipped:
            center = -center
    crop = crop_to_camera_fov(project_cloud(cloud, sample.projection), center, sample.horizontal_fov)
    return crop.channels_first(), subset.compact(crop.labels), subset.compact(camera_labels)


def make_batch(samples, subset, rng=None, config=None, dtype=np.float32) -> Batch:
    """Stack encoded samples into a training Batch; augmentation runs when ``config`` is given."""
    if not samples:
        raise DataFormatError("cannot build a batch from no samples")
    encoded = [encode_sample(sample, subset, rng, config) for sample in samples]
    range_view, lidar_labels, camera_labels = (np.stack(part) for part in zip(*encoded))
    return Batch(range_view.astype(dtype), lidar_labels, camera_labels)


def batch_source(samples, subset, config):
    """Callable (rng) -> Batch drawing ``config.batch_size`` samples with replacement."""
    if not samples:
        raise DataFormatError("training set is empty")
    dtype = np.dtype(config.dtype)

    def next_batch(rng):
        indices = rng.integers(0, len(samples), size=config.batch_size)
        return make_batch([samples[i] for i in indices], subset, rng, config, dtype)

    return next_batch
