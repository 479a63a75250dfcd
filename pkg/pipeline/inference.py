# pipeline/inference.py

import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from autodiff import Tensor, no_grad
from exceptions import ConfigurationError, TensorError
from geometry import RangeImage
from labels import ClassSubset, colorize, one_hot
from titan.generator import as_inputs


@dataclass
class Panorama:
    segment_map: np.ndarray
    image: np.ndarray
    width_ratio: int


def model_subset(generator):
    return ClassSubset("model", tuple(generator.config.class_ids))


@contextmanager
def evaluating(module):
    """Run ``module`` in eval mode and restore its previous mode afterwards."""
    previous = module.training
    module.eval()
    try:
        with no_grad():
            yield module
    finally:
        module.train(previous)


def _encode(generator, range_view, lidar_labels):
    subset = model_subset(generator)
    condition = one_hot(subset.compact(lidar_labels)[None], subset.num_channels)
    range_view = np.asarray(range_view)[None]
    return as_inputs(range_view, condition, dtype=generator.head.weight.dtype)


def _predict(generator, logits):
    indices = np.argmax(logits.data[0], axis=0)
    return model_subset(generator).expand(indices)


def translate(generator, range_crop, lidar_labels):
    """
    Camera segment map predicted from one range crop and its LiDAR segments.

    Ties in the argmax go to the lowest shared id.

    :param generator: Trained Generator
    :param range_crop: (5, h', w') range crop
    :param lidar_labels: (h', w') LiDAR segment map in shared ids
    :return: (H, W) segment map in shared ids
    """
    config = generator.config
    range_crop = np.asarray(range_crop)
    expected = (config.input_height, config.input_width)
    if range_crop.shape != (config.range_channels,) + expected or np.shape(lidar_labels) != expected:
        raise TensorError(
            f"inputs {range_crop.shape} / {np.shape(lidar_labels)} do not match the "
            f"generator's {expected[0]}x{expected[1]} training crop"
        )
    with evaluating(generator):
        logits = generator(*_encode(generator, range_crop, lidar_labels))
    return _predict(generator, logits)


def wrap_margin(generator):
    """Columns borrowed from the opposite edge: the receptive-field radius rounded up to the downsampling step."""
    step = generator.config.downsampling
    return int(math.ceil(generator.receptive_field_radius() / step)) * step


def render_panorama(generator, full_range_image: RangeImage, lidar_labels=None) -> Panorama:
    """
    Run the generator over the whole 360-degree range view.

    The inputs are padded circularly so the seam columns see their azimuthal
    neighbours; the padding is removed before the bilinear head.

    :param generator: Trained Generator
    :param full_range_image: Uncropped RangeImage
    :param lidar_labels: (h', w') LiDAR segments; defaults to ``full_range_image.labels``
    :return: Panorama with a segment map ``output_width * w' / input_width`` wide
    """
    config = generator.config
    labels = full_range_image.labels if lidar_labels is None else np.asarray(lidar_labels)
    if labels is None:
        raise ConfigurationError("panorama needs a LiDAR segment map")
    height, width = full_range_image.height, full_range_image.width
    if height != config.input_height:
        raise TensorError(f"range view height {height} differs from the training crop height {config.input_height}")
    if width % config.input_width:
        raise TensorError(
            f"range view width {width} is not a multiple of the {config.input_width}-column training crop"
        )

    margin = wrap_margin(generator)
    pad = ((0, 0), (0, 0), (margin, margin))
    range_view = np.pad(full_range_image.channels_first(), pad, mode="wrap")
    padded_labels = np.pad(labels, pad[1:], mode="wrap")
    with evaluating(generator):
        features = generator.features(*_encode(generator, range_view, padded_labels))
        features = Tensor(features.data[..., margin : margin + width])
        logits = generator.upsample(features, width_ratio=width // config.input_width)
    segment_map = _predict(generator, logits)
    return Panorama(segment_map, colorize(segment_map), width // config.input_width)
