# pipeline/synth.py

import asyncio
import math
import os
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np

from exceptions import ConfigurationError, SceneError
from geometry import PointCloud, ProjectionConfig
from labels import PALETTE, UNLABELED, class_id, to_semantickitti
from logger import logger
from utils import dataclass_from_dict, dataclass_to_file, philox, progress_bar, read_key_value_file

from .dataset import PairedSample, sample_name, save_sample, split_seeds
from .kitti import write_kitti_labels, write_kitti_scan

EPSILON = 1e-9
SKY_RGB = np.array([150, 180, 210], dtype=np.float64)
AMBIENT = 0.3

# (length, width, height) ranges in metres
BOX_SIZES = {
    "Car": ((3.8, 4.8), (1.6, 2.0), (1.4, 1.7)),
    "Truck": ((6.0, 9.0), (2.3, 2.6), (2.8, 3.6)),
    "Other-Vehicle": ((8.0, 12.0), (2.4, 2.6), (2.8, 3.2)),
    "Building": ((8.0, 16.0), (6.0, 12.0), (5.0, 12.0)),
    "Fence": ((4.0, 10.0), (0.1, 0.3), (1.0, 2.0)),
}
# (radius, height) ranges in metres
CYLINDER_SIZES = {
    "Pole": ((0.08, 0.15), (3.0, 6.0)),
    "Person": ((0.25, 0.35), (1.6, 1.9)),
    "Vegetation": ((0.8, 2.0), (2.0, 6.0)),
    "Traffic-Sign": ((0.3, 0.5), (2.0, 2.8)),
}
REFLECTIVITY = {
    "Car": 0.6,
    "Truck": 0.55,
    "Other-Vehicle": 0.55,
    "Building": 0.35,
    "Fence": 0.3,
    "Pole": 0.5,
    "Person": 0.25,
    "Vegetation": 0.2,
    "Traffic-Sign": 0.9,
    "Road": 0.1,
    "Sidewalk": 0.2,
    "Terrain": 0.15,
}


@dataclass(frozen=True)
class SyntheticSceneConfig:
    """
    Procedural scene, LiDAR model and pinhole camera; read from a ``key=value`` file.

    The LiDAR sits at the origin, ``sensor_height`` above the ground; the camera is
    offset from it by (camera_offset_x, 0, camera_offset_z) and looks along ``camera_yaw_deg``.

    The LiDAR defaults to 512 azimuth steps rather than the 2048 of a full-size scanner so
    that the 90 degree camera crop is 128 columns, the width of the 64x128 camera.
    """

    seed: int = 0
    min_boxes: int = 1
    max_boxes: int = 4
    min_cylinders: int = 1
    max_cylinders: int = 6
    box_classes: Tuple[str, ...] = ("Car", "Truck", "Building")
    cylinder_classes: Tuple[str, ...] = ("Pole", "Person", "Vegetation")
    min_distance: float = 5.0
    max_distance: float = 25.0
    in_view_fraction: float = 0.75
    road_half_width: float = 4.0
    sidewalk_width: float = 2.0
    beams: int = 64
    azimuth_steps: int = 512
    fov_up_deg: float = 3.0
    fov_down_deg: float = 25.0
    sensor_height: float = 1.73
    max_range: float = 80.0
    image_height: int = 64
    image_width: int = 128
    camera_fov_deg: float = 90.0
    camera_yaw_deg: float = 0.0
    camera_offset_x: float = 0.0
    camera_offset_z: float = 0.0

    def validate(self):
        errors = []
        positive = (
            "min_distance",
            "road_half_width",
            "beams",
            "azimuth_steps",
            "sensor_height",
            "max_range",
            "image_height",
            "image_width",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be > 0")
        if self.max_distance < self.min_distance:
            errors.append("max_distance must be >= min_distance")
        if self.sidewalk_width < 0:
            errors.append("sidewalk_width must be >= 0")
        for kind in ("boxes", "cylinders"):
            low, high = getattr(self, f"min_{kind}"), getattr(self, f"max_{kind}")
            if low < 0 or high < low:
                errors.append(f"need 0 <= min_{kind} <= max_{kind}, got {low}..{high}")
        if self.max_boxes and not self.box_classes:
            errors.append("box_classes is empty")
        if self.max_cylinders and not self.cylinder_classes:
            errors.append("cylinder_classes is empty")
        for name in self.box_classes:
            if name not in BOX_SIZES:
                errors.append(f"no box model for class '{name}', expected one of {sorted(BOX_SIZES)}")
        for name in self.cylinder_classes:
            if name not in CYLINDER_SIZES:
                errors.append(f"no cylinder model for class '{name}', expected one of {sorted(CYLINDER_SIZES)}")
        if not 0.0 <= self.in_view_fraction <= 1.0:
            errors.append("in_view_fraction must be in [0, 1]")
        if self.fov_up_deg < 0 or self.fov_down_deg < 0 or self.fov_up_deg + self.fov_down_deg <= 0:
            errors.append("fov_up_deg and fov_down_deg are magnitudes with a positive sum")
        # the LiDAR covers 360 degrees; a pinhole camera needs less than 180
        if not 0.0 < self.camera_fov_deg < 180.0:
            errors.append(f"camera_fov_deg must be in (0, 180), got {self.camera_fov_deg}")
        if errors:
            raise ConfigurationError("invalid scene configuration: " + "; ".join(errors))
        return self

    @property
    def projection(self):
        return ProjectionConfig.from_degrees(self.azimuth_steps, self.beams, self.fov_up_deg, self.fov_down_deg)

    @property
    def focal_length(self):
        """Pinhole focal length in pixels (square pixels)."""
        return 0.5 * self.image_width / math.tan(math.radians(self.camera_fov_deg) / 2.0)

    @property
    def camera_origin(self):
        return np.array([self.camera_offset_x, 0.0, self.camera_offset_z])

    @property
    def ground_z(self):
        return -self.sensor_height

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    @classmethod
    def from_dict(cls, values):
        return dataclass_from_dict(cls, values).validate()

    @classmethod
    def from_file(cls, path):
        return cls.from_dict(read_key_value_file(path))

    def to_file(self, path):
        dataclass_to_file(path, self)


@dataclass(frozen=True)
class Box:
    """Box standing on the ground, rotated by ``yaw`` about its vertical axis."""

    label: int
    center: Tuple[float, float]
    size: Tuple[float, float, float]
    yaw: float = 0.0

    def intersect(self, origin, directions, ground_z):
        """
        First hit along each ray (slab test in the box frame).

        :return: Tuple (t, normals); t is inf where the ray misses
        """
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        to_box = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
        center = np.array([self.center[0], self.center[1], ground_z + self.size[2] / 2.0])
        o = to_box @ (origin - center)
        d = directions @ to_box.T
        d = np.where(np.abs(d) < EPSILON, EPSILON, d)
        half = np.asarray(self.size) / 2.0

        t1 = (-half - o) / d
        t2 = (half - o) / d
        t_near = np.minimum(t1, t2).max(axis=1)
        t_far = np.maximum(t1, t2).min(axis=1)
        axis = np.minimum(t1, t2).argmax(axis=1)
        hit = (t_near <= t_far) & (t_near > EPSILON)

        rows = np.arange(len(d))
        local = np.zeros_like(d)
        local[rows, axis] = -np.sign(d[rows, axis])
        return np.where(hit, t_near, np.inf), local @ to_box


@dataclass(frozen=True)
class Cylinder:
    """Vertical cylinder standing on the ground."""

    label: int
    center: Tuple[float, float]
    radius: float
    height: float

    def intersect(self, origin, directions, ground_z):
        o = origin - np.array([self.center[0], self.center[1], ground_z])
        dx, dy, dz = directions[:, 0], directions[:, 1], directions[:, 2]
        a = dx * dx + dy * dy
        b = 2.0 * (o[0] * dx + o[1] * dy)
        c = o[0] ** 2 + o[1] ** 2 - self.radius**2
        disc = b * b - 4.0 * a * c
        with np.errstate(divide="ignore", invalid="ignore"):
            t_side = (-b - np.sqrt(np.maximum(disc, 0.0))) / (2.0 * a)
            z_side = o[2] + t_side * dz
            side = (a > EPSILON) & (disc >= 0) & (t_side > EPSILON) & (z_side >= 0) & (z_side <= self.height)
            t_side = np.where(side, t_side, np.inf)

            t_top = (self.height - o[2]) / dz
            top_x, top_y = o[0] + t_top * dx, o[1] + t_top * dy
            top = (np.abs(dz) > EPSILON) & (t_top > EPSILON) & (top_x**2 + top_y**2 <= self.radius**2)
            t_top = np.where(top, t_top, np.inf)

        t = np.minimum(t_side, t_top)
        normals = np.zeros_like(directions)
        on_side = np.isfinite(t_side) & (t_side <= t_top)
        hit_x = o[0] + t_side[on_side] * dx[on_side]
        hit_y = o[1] + t_side[on_side] * dy[on_side]
        normals[on_side, 0] = hit_x / self.radius
        normals[on_side, 1] = hit_y / self.radius
        normals[~on_side, 2] = 1.0
        return t, normals


@dataclass
class Scene:
    """Ground plane split into road, sidewalk and terrain strips by |y|, plus primitives."""

    ground_z: float
    road_half_width: float = 4.0
    sidewalk_width: float = 2.0
    primitives: List = field(default_factory=list)

    def ground_label(self, y):
        y = np.abs(y)
        labels = np.full(y.shape, class_id("Terrain"), dtype=np.int64)
        labels[y < self.road_half_width + self.sidewalk_width] = class_id("Sidewalk")
        labels[y < self.road_half_width] = class_id("Road")
        return labels

    def cast(self, origin, directions):
        """
        Nearest surface along each ray.

        :param origin: (3,) ray origin
        :param directions: (n, 3) unit directions
        :return: Tuple (t, labels, normals); t is inf and label Unlabeled where nothing is hit
        """
        origin = np.asarray(origin, dtype=np.float64)
        n = len(directions)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.ground_z - origin[2]) / directions[:, 2]
        t = np.where((directions[:, 2] < -EPSILON) & (t > EPSILON), t, np.inf)
        normals = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
        labels = np.full(n, UNLABELED, dtype=np.int64)
        ground = np.isfinite(t)
        labels[ground] = self.ground_label(origin[1] + t[ground] * directions[ground, 1])

        for primitive in self.primitives:
            t_hit, n_hit = primitive.intersect(origin, directions, self.ground_z)
            closer = t_hit < t
            t[closer] = t_hit[closer]
            normals[closer] = n_hit[closer]
            labels[closer] = primitive.label
        return t, labels, normals


def lidar_directions(projection: ProjectionConfig):
    """
    One unit ray per range-view pixel, through the pixel centre.

    :return: (height * width, 3) directions in row-major pixel order
    """
    rows = np.arange(projection.height) + 0.5
    cols = np.arange(projection.width) + 0.5
    pitch = (1.0 - rows / projection.height) * projection.fov - projection.fov_down
    azimuth = math.pi * (1.0 - 2.0 * cols / projection.width)
    pitch, azimuth = np.meshgrid(pitch, azimuth, indexing="ij")
    directions = np.stack(
        [np.cos(pitch) * np.cos(azimuth), np.cos(pitch) * np.sin(azimuth), np.sin(pitch)], axis=-1
    )
    return directions.reshape(-1, 3)


def camera_directions(config: SyntheticSceneConfig):
    """Unit rays through the camera pixel centres, (image_height * image_width, 3)."""
    f = config.focal_length
    cols = np.arange(config.image_width) + 0.5
    rows = np.arange(config.image_height) + 0.5
    left = -(cols - config.image_width / 2.0) / f
    up = -(rows - config.image_height / 2.0) / f
    up, left = np.meshgrid(up, left, indexing="ij")
    local = np.stack([np.ones_like(left), left, up], axis=-1).reshape(-1, 3)
    local /= np.linalg.norm(local, axis=1, keepdims=True)
    yaw = math.radians(config.camera_yaw_deg)
    c, s = math.cos(yaw), math.sin(yaw)
    rotation = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return local @ rotation.T


def project_to_camera(xyz, config: SyntheticSceneConfig):
    """Pinhole image coordinates (u, v) of world points in front of the camera."""
    xyz = np.asarray(xyz, dtype=np.float64) - config.camera_origin
    yaw = math.radians(config.camera_yaw_deg)
    c, s = math.cos(yaw), math.sin(yaw)
    forward = c * xyz[..., 0] + s * xyz[..., 1]
    left = -s * xyz[..., 0] + c * xyz[..., 1]
    f = config.focal_length
    u = config.image_width / 2.0 - f * left / forward
    v = config.image_height / 2.0 - f * xyz[..., 2] / forward
    return u, v


def _reflectivity_table():
    table = np.full(len(PALETTE), 0.5)
    for name, value in REFLECTIVITY.items():
        table[class_id(name)] = value
    return table


def scan_scene(scene: Scene, config: SyntheticSceneConfig) -> PointCloud:
    """
    Ray-cast the LiDAR model; intensity is reflectivity times the incidence cosine.

    Returns beyond ``max_range`` are dropped.
    """
    directions = lidar_directions(config.projection)
    t, labels, normals = scene.cast(np.zeros(3), directions)
    keep = np.isfinite(t) & (t <= config.max_range)
    xyz = directions[keep] * t[keep, None]
    incidence = np.abs(np.sum(normals[keep] * directions[keep], axis=1))
    intensity = np.clip(_reflectivity_table()[labels[keep]] * incidence, 0.0, 1.0)
    points = np.column_stack([xyz, intensity]).astype(np.float32)
    return PointCloud(points, labels[keep])


def render_camera(scene: Scene, config: SyntheticSceneConfig):
    """
    Per-pixel ray cast of the camera view.

    :return: Tuple (segment map (H, W) of shared ids, shaded RGB (H, W, 3) uint8)
    """
    directions = camera_directions(config)
    t, labels, normals = scene.cast(config.camera_origin, directions)
    hit = np.isfinite(t)
    shade = AMBIENT + (1.0 - AMBIENT) * np.abs(np.sum(normals * directions, axis=1))
    rgb = np.where(hit[:, None], PALETTE[labels].astype(np.float64) * shade[:, None], SKY_RGB)
    shape = (config.image_height, config.image_width)
    return labels.reshape(shape), np.clip(np.round(rgb), 0, 255).astype(np.uint8).reshape(shape + (3,))


def _place(config: SyntheticSceneConfig, rng, reach):
    if rng.random() < config.in_view_fraction:
        half_fov = math.radians(config.camera_fov_deg) / 2.0
        azimuth = math.radians(config.camera_yaw_deg) + rng.uniform(-half_fov, half_fov)
    else:
        azimuth = rng.uniform(-math.pi, math.pi)
    clearance = reach + 1.0 + float(np.linalg.norm(config.camera_origin))
    distance = max(rng.uniform(config.min_distance, config.max_distance), clearance)
    return (distance * math.cos(azimuth), distance * math.sin(azimuth))


def build_scene(config: SyntheticSceneConfig, rng) -> Scene:
    """Draw primitive counts, classes, sizes and poses from ``rng``."""
    scene = Scene(config.ground_z, config.road_half_width, config.sidewalk_width)
    for _ in range(rng.integers(config.min_boxes, config.max_boxes + 1)):
        name = config.box_classes[rng.integers(len(config.box_classes))]
        size = tuple(float(rng.uniform(low, high)) for low, high in BOX_SIZES[name])
        yaw = float(rng.uniform(-math.pi, math.pi))
        center = _place(config, rng, 0.5 * math.hypot(size[0], size[1]))
        scene.primitives.append(Box(class_id(name), center, size, yaw))
    for _ in range(rng.integers(config.min_cylinders, config.max_cylinders + 1)):
        name = config.cylinder_classes[rng.integers(len(config.cylinder_classes))]
        radius, height = (float(rng.uniform(low, high)) for low, high in CYLINDER_SIZES[name])
        scene.primitives.append(Cylinder(class_id(name), _place(config, rng, radius), radius, height))
    return scene


def render_sample(scene: Scene, config: SyntheticSceneConfig, seed=None) -> PairedSample:
    """
    Ray-cast an explicit scene with the configured LiDAR and camera.

    :raises SceneError: when no LiDAR ray returns
    """
    cloud = scan_scene(scene, config)
    if len(cloud) == 0:
        raise SceneError("degenerate scene: no LiDAR ray hits a surface within range")
    camera_labels, rgb = render_camera(scene, config)
    return PairedSample(
        cloud=cloud,
        camera_labels=camera_labels,
        projection=config.projection,
        center_azimuth=math.radians(config.camera_yaw_deg),
        horizontal_fov=math.radians(config.camera_fov_deg),
        rgb=rgb,
        seed=seed,
    )


def synth_scene(config: SyntheticSceneConfig) -> PairedSample:
    """
    Generate one paired sample; a pure function of the config and its seed.

    :param config: Scene configuration
    :return: PairedSample with labelled cloud, camera segment map and shaded RGB
    """
    config.validate()
    scene = build_scene(config, philox(config.seed))
    logger.debug(f"Scene {config.seed}: {len(scene.primitives)} primitives")
    return render_sample(scene, config, seed=config.seed)


def write_sample(directory, name, sample: PairedSample):
    """Write the ``.npz`` sample plus SemanticKITTI ``velodyne/*.bin`` and ``labels/*.label`` files."""
    save_sample(os.path.join(directory, f"{name}.npz"), sample)
    write_kitti_scan(os.path.join(directory, "velodyne", f"{name}.bin"), sample.cloud)
    write_kitti_labels(os.path.join(directory, "labels", f"{name}.label"), to_semantickitti(sample.cloud.labels))


async def _synth_all(configs, workers, pbar):
    semaphore = asyncio.Semaphore(workers)

    async def synth_one(config):
        async with semaphore:
            try:
                sample = await asyncio.to_thread(synth_scene, config)
            except SceneError as e:
                logger.warning(f"Skipping scene {config.seed}: {e.message}")
                sample = None
        pbar.update(1)
        return sample

    return await asyncio.gather(*(synth_one(config) for config in configs))


def generate_split(config: SyntheticSceneConfig, split, count, directory, base_seed=0, workers=4, quiet=False):
    """
    Synthesize ``count`` samples of ``split`` from the split's own seed block and write them.

    Degenerate scenes are skipped; the remaining samples keep the names of their seeds.

    :return: List of (name, PairedSample)
    """
    configs = [config.with_seed(seed) for seed in split_seeds(split, count, base_seed)]
    logger.info(f"Synthesizing {count} {split} scenes into {directory}")
    with progress_bar(desc=f"Scenes ({split})", total=count, disable=quiet) as pbar:
        samples = asyncio.run(_synth_all(configs, max(1, workers), pbar))
    written = []
    for index, sample in enumerate(samples):
        if sample is None:
            continue
        name = sample_name(split, base_seed + index)
        write_sample(directory, name, sample)
        written.append((name, sample))
    return written
