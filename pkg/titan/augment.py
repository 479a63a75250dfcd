# titan/augment.py

import numpy as np

from geometry import PointCloud


def flip_y(cloud: PointCloud) -> PointCloud:
    """Mirror the cloud across the x-z plane (negate y)."""
    points = cloud.points.copy()
    points[:, 1] = -points[:, 1]
    labels = None if cloud.labels is None else cloud.labels.copy()
    return PointCloud(points, labels)


def drop_points(cloud: PointCloud, fraction, rng) -> PointCloud:
    """Remove round(fraction * n) uniformly chosen points, never all of them."""
    n = len(cloud)
    count = min(int(round(fraction * n)), n - 1)
    if count <= 0:
        return cloud
    keep = np.ones(n, dtype=bool)
    keep[rng.choice(n, size=count, replace=False)] = False
    return cloud.subset(keep)


def augment(cloud: PointCloud, rng, flip_prob=0.5, drop_prob=0.5, max_drop_fraction=0.1, camera_labels=None):
    """
    Random y-flip and point dropping, applied before projection.

    The flip decision and the drop decision are drawn independently, in that order.
    When ``camera_labels`` is given it is mirrored along with the cloud.

    :param cloud: Labelled point cloud
    :param rng: numpy Generator
    :return: Tuple (cloud, camera_labels, flipped)
    """
    flip = bool(rng.random() < flip_prob)
    drop = rng.random() < drop_prob
    if flip:
        cloud = flip_y(cloud)
        if camera_labels is not None:
            camera_labels = np.ascontiguousarray(np.asarray(camera_labels)[..., ::-1])
    if drop:
        cloud = drop_points(cloud, rng.uniform(0.0, max_drop_fraction), rng)
    return cloud, camera_labels, flip
