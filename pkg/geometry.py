# geometry.py

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from exceptions import GeometryError

FILL_VALUE = -1.0
CHANNELS = ("x", "y", "z", "i", "r")


@dataclass
class PointCloud:
    """LiDAR returns as an (n, 4) array of x, y, z, intensity, with optional labels."""

    points: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points)
        if self.points.ndim != 2 or self.points.shape[1] != 4:
            raise GeometryError(f"points must have shape (n, 4), got {self.points.shape}")
        if not np.issubdtype(self.points.dtype, np.floating):
            self.points = self.points.astype(np.float64)
        if not np.all(np.isfinite(self.points[:, :3])):
            raise GeometryError("point cloud holds non-finite coordinates")
        if len(self.points) and np.any(ranges(self.points) == 0.0):
            raise GeometryError("degenerate point: zero range at the sensor origin")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.points),):
                raise GeometryError(
                    f"labels must hold one entry per point: {self.labels.shape} vs {len(self.points)}"
                )

    def __len__(self):
        return len(self.points)

    @property
    def xyz(self):
        return self.points[:, :3]

    @property
    def intensity(self):
        return self.points[:, 3]

    def subset(self, mask):
        labels = self.labels[mask] if self.labels is not None else None
        return PointCloud(self.points[mask], labels)


@dataclass(frozen=True)
class ProjectionConfig:
    """Range-view grid size and vertical field of view (both FOV values are magnitudes)."""

    width: int = 2048
    height: int = 64
    fov_up: float = math.radians(3.0)
    fov_down: float = math.radians(25.0)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise GeometryError(f"projection size must be positive, got {self.width}x{self.height}")
        if self.fov_up < 0 or self.fov_down < 0:
            raise GeometryError("fov_up and fov_down are magnitudes and must be >= 0")
        if self.fov <= 0:
            raise GeometryError("vertical field of view must be > 0")

    @property
    def fov(self):
        return abs(self.fov_up) + abs(self.fov_down)

    @classmethod
    def from_degrees(cls, width, height, fov_up_deg, fov_down_deg):
        return cls(width, height, math.radians(fov_up_deg), math.radians(fov_down_deg))


@dataclass
class RangeImage:
    """
    Projected scan: ``data`` is (h', w', 5) with channels x, y, z, i, r.

    Invalid pixels hold FILL_VALUE in every channel; ``labels`` is the parallel
    class grid (0 where invalid) when the source cloud carried labels.
    """

    data: np.ndarray
    valid: np.ndarray
    config: ProjectionConfig
    labels: Optional[np.ndarray] = None
    column_offset: int = field(default=0)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def range(self):
        return self.data[..., 4]

    def channels_first(self):
        """(5, h', w') view used as network input."""
        return np.transpose(self.data, (2, 0, 1))

    def take_columns(self, columns):
        labels = self.labels[:, columns] if self.labels is not None else None
        offset = int(columns[0]) if len(columns) else 0
        return RangeImage(
            self.data[:, columns].copy(),
            self.valid[:, columns].copy(),
            self.config,
            None if labels is None else labels.copy(),
            offset,
        )


def ranges(points):
    xyz = np.asarray(points, dtype=np.float64)[..., :3]
    return np.sqrt(np.sum(xyz * xyz, axis=-1))


def project_point(point, config: ProjectionConfig):
    """
    Map one (x, y, z) point to real-valued image coordinates (u, v) before clamping.

    :param point: Sequence with at least x, y, z
    :param config: Projection configuration
    :return: Tuple (u, v)
    """
    x, y, z = (float(c) for c in point[:3])
    r = math.sqrt(x * x + y * y + z * z)
    if r == 0.0:
        raise GeometryError("degenerate point: zero range")
    u = 0.5 * (1.0 - math.atan2(y, x) / math.pi) * config.width
    v = (1.0 - (math.asin(z / r) + abs(config.fov_down)) / config.fov) * config.height
    return u, v


def project_points(xyz, config: ProjectionConfig):
    """Vectorised project_point over an (n, 3) array; returns (u, v, r) arrays."""
    xyz = np.asarray(xyz, dtype=np.float64)
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    r = np.sqrt(x * x + y * y + z * z)
    if np.any(r == 0.0):
        raise GeometryError("degenerate point: zero range")
    u = 0.5 * (1.0 - np.arctan2(y, x) / np.pi) * config.width
    v = (1.0 - (np.arcsin(np.clip(z / r, -1.0, 1.0)) + abs(config.fov_down)) / config.fov) * config.height
    return u, v, r


def discretize(u, v, config: ProjectionConfig):
    """Floor then clamp to [0, w'-1] x [0, h'-1]."""
    cols = np.clip(np.floor(u), 0, config.width - 1).astype(np.int64)
    rows = np.clip(np.floor(v), 0, config.height - 1).astype(np.int64)
    return cols, rows


def in_bounds(u, v, config: ProjectionConfig):
    return (u >= 0) & (u < config.width) & (v >= 0) & (v < config.height)


def project_cloud(cloud: PointCloud, config: ProjectionConfig) -> RangeImage:
    """
    Project a cloud onto the range view; the nearest point wins each pixel.

    :param cloud: Point cloud, optionally labelled
    :param config: Projection configuration
    :return: RangeImage (with ``labels`` filled when the cloud has labels)
    """
    if len(cloud) == 0:
        raise GeometryError("empty cloud")

    u, v, r = project_points(cloud.xyz, config)
    cols, rows = discretize(u, v, config)
    flat = rows * config.width + cols

    # Sort by pixel, then by range; the first entry per pixel is the nearest point.
    order = np.lexsort((r, flat))
    first = np.unique(flat[order], return_index=True)[1]
    winners = order[first]

    dtype = cloud.points.dtype
    data = np.full((config.height, config.width, 5), FILL_VALUE, dtype=dtype)
    valid = np.zeros((config.height, config.width), dtype=bool)

    wr, wc = rows[winners], cols[winners]
    data[wr, wc, :4] = cloud.points[winners]
    data[wr, wc, 4] = r[winners]
    valid[wr, wc] = True

    labels = None
    if cloud.labels is not None:
        labels = np.zeros((config.height, config.width), dtype=np.int64)
        labels[wr, wc] = cloud.labels[winners]

    return RangeImage(data, valid, config, labels)


def crop_columns(width, center_azimuth, horizontal_fov):
    """Column indices (with seam wrap) of the slab centred on ``center_azimuth``."""
    if not 0 < horizontal_fov <= 2 * math.pi + 1e-12:
        raise GeometryError(f"horizontal_fov must be in (0, 2*pi], got {horizontal_fov}")
    crop_width = int(round(width * horizontal_fov / (2 * math.pi)))
    crop_width = max(1, min(width, crop_width))
    center_column = 0.5 * (1.0 - center_azimuth / math.pi) * width
    start = int(round(center_column - crop_width / 2.0))
    return (start + np.arange(crop_width)) % width


def crop_to_camera_fov(range_image: RangeImage, center_azimuth, horizontal_fov) -> RangeImage:
    """
    Keep the contiguous column slab covering ``center ± fov/2``.

    :param range_image: Full-width range image
    :param center_azimuth: Slab centre in radians (0 = straight ahead)
    :param horizontal_fov: Slab width in radians, in (0, 2*pi]
    :return: Cropped RangeImage of width round(w' * fov / 2pi)
    """
    columns = crop_columns(range_image.width, center_azimuth, horizontal_fov)
    return range_image.take_columns(columns)


def mirror_columns(range_image: RangeImage) -> RangeImage:
    """Column-mirror a full-width range image (the image of a y-axis flip)."""
    labels = range_image.labels[:, ::-1].copy() if range_image.labels is not None else None
    return RangeImage(
        range_image.data[:, ::-1].copy(),
        range_image.valid[:, ::-1].copy(),
        range_image.config,
        labels,
    )
