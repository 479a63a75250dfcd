# pipeline/images.py

import os

import numpy as np
from PIL import Image

from exceptions import DataFormatError
from geometry import RangeImage
from labels import check_segment_map, colorize


def _prepare(path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)


def save_rgb(path, image):
    """Write an (h, w, 3) uint8 image."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[-1] != 3:
        raise DataFormatError(f"expected an (h, w, 3) image, got {image.shape}")
    _prepare(path)
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8)).save(path)


def load_rgb(path):
    try:
        with Image.open(path) as image:
            return np.asarray(image.convert("RGB"))
    except OSError as e:
        raise DataFormatError(f"cannot read image {path}: {e}")


def save_id_map(path, segment_map):
    """Raw shared ids as an 8-bit grayscale PNG, or ``.npy`` when the path says so."""
    segment_map = check_segment_map(segment_map)
    _prepare(path)
    if path.endswith(".npy"):
        np.save(path, segment_map)
        return
    Image.fromarray(segment_map.astype(np.uint8)).save(path)


def load_id_map(path):
    if path.endswith(".npy"):
        return check_segment_map(np.load(path))
    with Image.open(path) as image:
        return check_segment_map(np.asarray(image).astype(np.int64))


def save_segment_map(path, segment_map):
    """
    Write the colorized map to ``path`` and the raw ids next to it as ``<stem>_ids.png``.

    :return: Tuple (rgb path, id-map path)
    """
    stem, _ = os.path.splitext(path)
    ids_path = f"{stem}_ids.png"
    save_rgb(path, colorize(segment_map))
    save_id_map(ids_path, segment_map)
    return path, ids_path


def range_to_image(range_image: RangeImage, low=1, high=99):
    """Range channel scaled between its ``low``/``high`` percentiles; invalid pixels are black."""
    values = range_image.range
    valid = range_image.valid
    normalized = np.zeros(values.shape, dtype=np.float64)
    if valid.any():
        lo, hi = np.percentile(values[valid], (low, high))
        hi = hi if hi > lo else values[valid].max()
        normalized[valid] = np.clip((values[valid] - lo) / (hi - lo + 1e-12), 0.0, 1.0)
    return (normalized * 255).astype(np.uint8)


def save_range_image(path, range_image: RangeImage):
    """Range channel as grayscale; a colorized label view goes to ``<stem>_labels.png`` when labels exist."""
    _prepare(path)
    Image.fromarray(range_to_image(range_image)).save(path)
    if range_image.labels is not None:
        stem, _ = os.path.splitext(path)
        save_rgb(f"{stem}_labels.png", colorize(range_image.labels))
