# pipeline/kitti.py

import os

import numpy as np

from exceptions import DataFormatError
from geometry import PointCloud
from labels import map_semantickitti

SCAN_DTYPE = np.dtype("<f4")
LABEL_DTYPE = np.dtype("<u4")
POINT_BYTES = 4 * SCAN_DTYPE.itemsize


def _read_bytes(path):
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise DataFormatError(f"cannot read {path}: {e}")


def read_kitti_scan(path) -> PointCloud:
    """
    Read a velodyne ``.bin`` scan: little-endian float32 x, y, z, intensity per point.

    :raises DataFormatError: "malformed scan" when the size is not a multiple of 16 bytes,
        "empty scan" when the file holds no points
    """
    payload = _read_bytes(path)
    if len(payload) % POINT_BYTES:
        raise DataFormatError(f"malformed scan {path}: {len(payload)} bytes is not a multiple of {POINT_BYTES}")
    if not payload:
        raise DataFormatError(f"empty scan {path}")
    points = np.frombuffer(payload, dtype=SCAN_DTYPE).reshape(-1, 4).astype(np.float32)
    return PointCloud(points)


def write_kitti_scan(path, cloud_or_points):
    points = cloud_or_points.points if isinstance(cloud_or_points, PointCloud) else cloud_or_points
    points = np.asarray(points, dtype=SCAN_DTYPE)
    if points.ndim != 2 or points.shape[1] != 4:
        raise DataFormatError(f"scan points must have shape (n, 4), got {points.shape}")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(points.tobytes())


def read_kitti_labels(path, n_points):
    """
    Read a ``.label`` file and keep the semantic part (low 16 bits) of every word.

    :raises DataFormatError: "label/scan mismatch" when the word count differs from ``n_points``
    """
    payload = _read_bytes(path)
    if len(payload) % LABEL_DTYPE.itemsize:
        raise DataFormatError(f"label/scan mismatch: {path} is not a whole number of 32-bit words")
    words = np.frombuffer(payload, dtype=LABEL_DTYPE)
    if len(words) != n_points:
        raise DataFormatError(f"label/scan mismatch: {len(words)} labels for {n_points} points in {path}")
    return (words & 0xFFFF).astype(np.int64)


def read_kitti_instances(path):
    """High 16 bits of every label word."""
    return (np.frombuffer(_read_bytes(path), dtype=LABEL_DTYPE) >> 16).astype(np.int64)


def write_kitti_labels(path, semantic, instance=None):
    semantic = np.asarray(semantic, dtype=np.int64)
    if semantic.size and (semantic.min() < 0 or semantic.max() > 0xFFFF):
        raise DataFormatError("semantic ids must fit in 16 bits")
    words = semantic.astype(np.uint32)
    if instance is not None:
        words |= np.asarray(instance, dtype=np.uint32) << 16
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(words.astype(LABEL_DTYPE).tobytes())


def load_labelled_scan(scan_path, label_path=None):
    """Scan plus SemanticKITTI labels mapped to shared ids."""
    cloud = read_kitti_scan(scan_path)
    if label_path is None:
        return cloud
    raw = read_kitti_labels(label_path, len(cloud))
    return PointCloud(cloud.points, map_semantickitti(raw))
