# metrics.py

import csv
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg, ndimage

from exceptions import MetricError
from labels import NUM_CLASSES, SHARED_CLASSES
from utils import philox

SSIM_K1, SSIM_K2 = 0.01, 0.03
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
BINOMIAL_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

SWD_PATCH_SIZE = 7
SWD_MAX_PATCHES = 2**14
SWD_PROJECTIONS = 512
PYRAMID_RESOLUTION = 1024
PYRAMID_MIN_RESOLUTION = 16

EVALUATION_NOTE = (
    "image metrics compare colorized segment maps, not synthesized RGB; "
    "Frechet distances use histogram features and are not comparable with Inception-based FID"
)


# -------------------------------------------------------------------- mIoU
def confusion_matrix(pred, gt, num_classes=NUM_CLASSES, ignore_id=0):
    """Counts[g, p] over pixels whose ground truth is not ``ignore_id``."""
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if pred.shape != gt.shape:
        raise MetricError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    keep = np.ones(gt.shape, dtype=bool) if ignore_id is None else gt != ignore_id
    for name, grid in (("prediction", pred), ("ground truth", gt)):
        if grid.size and (grid.min() < 0 or grid.max() >= num_classes):
            raise MetricError(f"{name} holds ids outside [0, {num_classes - 1}]")
    flat = gt[keep] * num_classes + pred[keep]
    return np.bincount(flat, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def iou_from_confusion(confusion, ignore_id=0):
    """
    Per-class IoU and its mean.

    :return: Tuple (per_class, mean); per_class is NaN for the ignored class and for empty unions
    """
    confusion = np.asarray(confusion, dtype=np.float64)
    intersection = np.diag(confusion)
    union = confusion.sum(axis=0) + confusion.sum(axis=1) - intersection
    per_class = np.full(len(confusion), np.nan)
    present = union > 0
    per_class[present] = intersection[present] / union[present]
    if ignore_id is not None:
        per_class[ignore_id] = np.nan
    valid = ~np.isnan(per_class)
    mean = float(per_class[valid].mean()) if valid.any() else float("nan")
    return per_class, mean


def miou(pred, gt, num_classes=NUM_CLASSES, ignore_id=0):
    return iou_from_confusion(confusion_matrix(pred, gt, num_classes, ignore_id), ignore_id)


# -------------------------------------------------------------------- SSIM
def to_grayscale(image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        if image.shape[-1] != 3:
            raise MetricError(f"colour images must have 3 channels, got {image.shape}")
        return image @ LUMA_WEIGHTS
    if image.ndim != 2:
        raise MetricError(f"expected a 2-d or RGB image, got shape {image.shape}")
    return image


def ssim(a, b, window=11, data_range=1.0):
    """
    Mean SSIM over all valid (unpadded) ``window`` x ``window`` windows.

    :param a: Image in [0, data_range]; RGB is converted to luma
    :param b: Image of the same shape
    :return: float in [-1, 1]
    """
    a, b = to_grayscale(a), to_grayscale(b)
    if a.shape != b.shape:
        raise MetricError(f"images differ in shape: {a.shape} vs {b.shape}")
    if min(a.shape) < window:
        raise MetricError(f"image {a.shape} is smaller than the {window}x{window} window")

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    half = window // 2
    valid = (slice(half, a.shape[0] - (window - 1 - half)), slice(half, a.shape[1] - (window - 1 - half)))

    def local_mean(x):
        return ndimage.uniform_filter(x, size=window, mode="constant")[valid]

    mu_a, mu_b = local_mean(a), local_mean(b)
    var_a = local_mean(a * a) - mu_a * mu_a
    var_b = local_mean(b * b) - mu_b * mu_b
    cov = local_mean(a * b) - mu_a * mu_b

    numerator = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    denominator = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(numerator / denominator))


# ---------------------------------------------------------------- pyramid
def _blur(image, gain=1.0):
    kernel = BINOMIAL_KERNEL * gain
    blurred = ndimage.convolve1d(image, kernel, axis=0, mode="mirror")
    return ndimage.convolve1d(blurred, kernel, axis=1, mode="mirror")


def pyramid_down(image):
    return _blur(image)[::2, ::2]


def pyramid_up(image, shape):
    """Zero-insert to ``shape`` and interpolate with the doubled binomial kernel."""
    expanded = np.zeros(shape, dtype=np.float64)
    expanded[::2, ::2] = image
    return _blur(expanded, gain=2.0)


def resize(image, size):
    """Bilinear resize of an (h, w) or (h, w, c) image to ``size`` = (h', w')."""
    image = np.asarray(image, dtype=np.float64)
    factors = (size[0] / image.shape[0], size[1] / image.shape[1]) + (1.0,) * (image.ndim - 2)
    resized = ndimage.zoom(image, factors, order=1, mode="nearest", grid_mode=True)
    return resized[: size[0], : size[1]]


def laplacian_pyramid(image, min_resolution=PYRAMID_MIN_RESOLUTION):
    """
    Band-pass levels from full resolution down to ``2 * min_resolution``, then the low-pass residual.

    :param image: Square (s, s) or (s, s, c) image with s a power of two >= min_resolution
    :return: List of arrays, finest first
    """
    image = np.asarray(image, dtype=np.float64)
    side = image.shape[0]
    if image.ndim < 2 or image.shape[1] != side:
        raise MetricError(f"pyramid input must be square, got {image.shape}")
    if side < min_resolution or side & (side - 1):
        raise MetricError(f"pyramid side must be a power of two >= {min_resolution}, got {side}")

    levels = []
    current = image
    while current.shape[0] > min_resolution:
        lower = pyramid_down(current)
        levels.append(current - pyramid_up(lower, current.shape))
        current = lower
    levels.append(current)
    return levels


def reconstruct_pyramid(levels):
    current = levels[-1]
    for band in reversed(levels[:-1]):
        current = band + pyramid_up(current, band.shape)
    return current


# --------------------------------------------------------------------- SWD
def extract_patches(image, count, rng, patch_size=SWD_PATCH_SIZE):
    """``count`` random patch_size x patch_size patches of an (h, w, c) level, flattened."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[..., None]
    h, w = image.shape[:2]
    if h < patch_size or w < patch_size:
        raise MetricError(f"level {image.shape} is smaller than a {patch_size}x{patch_size} patch")
    rows = rng.integers(0, h - patch_size + 1, size=count)
    cols = rng.integers(0, w - patch_size + 1, size=count)
    offsets = np.arange(patch_size)
    r = rows[:, None, None] + offsets[None, :, None]
    c = cols[:, None, None] + offsets[None, None, :]
    return image[r, c].reshape(count, -1)


def normalize_patches(patches, channels):
    """Zero mean, unit std per colour channel over the whole patch set."""
    patches = np.asarray(patches, dtype=np.float64)
    shaped = patches.reshape(len(patches), -1, channels)
    mean = shaped.mean(axis=(0, 1), keepdims=True)
    std = shaped.std(axis=(0, 1), keepdims=True)
    std[std == 0] = 1.0
    return ((shaped - mean) / std).reshape(len(patches), -1)


def random_directions(dim, n_projections, rng):
    directions = rng.standard_normal((dim, n_projections))
    return directions / np.linalg.norm(directions, axis=0, keepdims=True)


def swd(patches_a, patches_b, n_projections=SWD_PROJECTIONS, rng=None, directions=None):
    """
    Sliced Wasserstein-1 distance between two equal-dimension point sets.

    :param patches_a: (n_a, d) array
    :param patches_b: (n_b, d) array
    :param n_projections: Number of random unit directions when ``directions`` is not given
    :param rng: numpy Generator for directions and for subsampling the larger set
    :param directions: Optional explicit (d, k) matrix of unit directions
    :return: Mean over directions of the exact 1-D W1 of the sorted projections
    """
    a = np.asarray(patches_a, dtype=np.float64)
    b = np.asarray(patches_b, dtype=np.float64)
    if a.ndim == 1:
        a, b = a[:, None], np.asarray(b, dtype=np.float64).reshape(-1, 1)
    if not len(a) or not len(b):
        raise MetricError("empty patch sets")
    if a.shape[1] != b.shape[1]:
        raise MetricError(f"patch dimensionality differs: {a.shape[1]} vs {b.shape[1]}")
    if len(a) != len(b):
        if rng is None:
            raise MetricError("unequal set sizes need an rng for subsampling")
        n = min(len(a), len(b))
        if len(a) > n:
            a = a[np.sort(rng.choice(len(a), n, replace=False))]
        else:
            b = b[np.sort(rng.choice(len(b), n, replace=False))]
    if directions is None:
        if rng is None:
            raise MetricError("random projections need an rng")
        directions = random_directions(a.shape[1], n_projections, rng)
    directions = np.asarray(directions, dtype=np.float64)
    projected_a = np.sort(a @ directions, axis=0)
    projected_b = np.sort(b @ directions, axis=0)
    return float(np.mean(np.abs(projected_a - projected_b)))


def pyramid_patch_sets(images, rng, resolution=PYRAMID_RESOLUTION, max_patches=SWD_MAX_PATCHES):
    """Per pyramid level, the normalised patch set drawn from all ``images``."""
    per_image = max(1, max_patches // len(images))
    collected = None
    for image in images:
        image = np.asarray(image, dtype=np.float64)
        if image.ndim == 2:
            image = image[..., None]
        levels = laplacian_pyramid(resize(image, (resolution, resolution)))
        if collected is None:
            collected = [[] for _ in levels]
        for index, level in enumerate(levels):
            collected[index].append(extract_patches(level, per_image, rng))
    channels = np.asarray(images[0]).shape[-1] if np.asarray(images[0]).ndim == 3 else 1
    return [normalize_patches(np.concatenate(parts)[:max_patches], channels) for parts in collected]


def sliced_wasserstein_pyramid(images_a, images_b, rng, resolution=PYRAMID_RESOLUTION, n_projections=SWD_PROJECTIONS):
    """
    SWD per Laplacian level between two image sets.

    :return: List of (level resolution, distance), finest first
    """
    if not len(images_a) or not len(images_b):
        raise MetricError("empty patch sets")
    # both sets sample patches at the same positions
    seed = int(rng.integers(0, 2**63 - 1))
    sets_a = pyramid_patch_sets(images_a, philox(seed), resolution)
    sets_b = pyramid_patch_sets(images_b, philox(seed), resolution)
    results = []
    for index, (a, b) in enumerate(zip(sets_a, sets_b)):
        results.append((resolution >> index, swd(a, b, n_projections, rng)))
    return results


# ---------------------------------------------------------------- Fréchet
def _check_psd(sigma, name, tol):
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise MetricError(f"{name} must be a square matrix, got {sigma.shape}")
    if not np.allclose(sigma, sigma.T, atol=tol):
        raise MetricError(f"{name} is not symmetric")
    smallest = linalg.eigh(sigma, eigvals_only=True)[0] if len(sigma) else 0.0
    if smallest < -tol:
        raise MetricError(f"{name} is not positive semi-definite (eigenvalue {smallest:.3g})")


def _psd_sqrt(sigma):
    values, vectors = linalg.eigh((sigma + sigma.T) / 2.0)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def frechet_distance(mu1, sigma1, mu2, sigma2, tol=1e-6):
    """
    ‖μ1-μ2‖² + tr(Σ1 + Σ2 - 2 (Σ1 Σ2)^{1/2}) between two Gaussians.

    The trace of the square root is taken from the eigenvalues of √Σ1 Σ2 √Σ1,
    which is symmetric and shares its spectrum with Σ1 Σ2.
    """
    mu1, mu2 = np.atleast_1d(np.asarray(mu1, np.float64)), np.atleast_1d(np.asarray(mu2, np.float64))
    sigma1, sigma2 = np.atleast_2d(np.asarray(sigma1, np.float64)), np.atleast_2d(np.asarray(sigma2, np.float64))
    if mu1.shape != mu2.shape or sigma1.shape != sigma2.shape or sigma1.shape[0] != mu1.shape[0]:
        raise MetricError(f"mismatched Gaussian dimensions: {mu1.shape}, {sigma1.shape}, {mu2.shape}, {sigma2.shape}")
    _check_psd(sigma1, "sigma1", tol)
    _check_psd(sigma2, "sigma2", tol)

    root1 = _psd_sqrt(sigma1)
    product = root1 @ sigma2 @ root1
    eigenvalues = linalg.eigh((product + product.T) / 2.0, eigvals_only=True)
    trace_covmean = np.sum(np.sqrt(np.clip(eigenvalues, 0.0, None)))
    diff = mu1 - mu2
    return float(diff @ diff + np.trace(sigma1) + np.trace(sigma2) - 2.0 * trace_covmean)


def gaussian_statistics(features):
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or len(features) < 2:
        raise MetricError("need at least two feature vectors to fit a Gaussian")
    return features.mean(axis=0), np.cov(features, rowvar=False)


class HistogramFeatures:
    """
    Default feature extractor: per-channel histograms of a fixed-size downsample.

    Inputs are (h, w, 3) images with values in [0, 1].
    """

    def __init__(self, size=64, bins=64):
        self.size, self.bins = size, bins

    def __call__(self, images):
        rows = []
        for image in images:
            image = np.asarray(image, dtype=np.float64)
            if image.ndim == 2:
                image = image[..., None]
            small = np.clip(resize(image, (self.size, self.size)), 0.0, 1.0)
            hist = [
                np.histogram(small[..., c], bins=self.bins, range=(0.0, 1.0))[0] / small[..., c].size
                for c in range(small.shape[-1])
            ]
            rows.append(np.concatenate(hist))
        return np.stack(rows)


def frechet_from_images(images_a, images_b, extractor=None):
    extractor = extractor or HistogramFeatures()
    mu1, sigma1 = gaussian_statistics(extractor(images_a))
    mu2, sigma2 = gaussian_statistics(extractor(images_b))
    return frechet_distance(mu1, sigma1, mu2, sigma2)


# ------------------------------------------------------------------ report
@dataclass
class MetricReport:
    class_names: List[str]
    per_class_iou: np.ndarray
    miou: float
    ssim: float
    swd_per_level: List[Tuple[int, float]] = field(default_factory=list)
    frechet: Optional[float] = None
    note: str = EVALUATION_NOTE

    @property
    def swd_avg(self):
        if not self.swd_per_level:
            return float("nan")
        return float(np.mean([value for _, value in self.swd_per_level]))

    def rows(self):
        rows = [(f"iou_{name}", float(value)) for name, value in zip(self.class_names, self.per_class_iou)]
        rows += [("miou", self.miou), ("ssim", self.ssim)]
        rows += [(f"swd_{resolution}", value) for resolution, value in self.swd_per_level]
        rows.append(("swd_avg", self.swd_avg))
        if self.frechet is not None:
            rows.append(("frechet", self.frechet))
        return rows

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            f.write(f"# {self.note}\n")
            writer = csv.writer(f)
            writer.writerow(["metric", "value"])
            writer.writerows(self.rows())

    def to_table(self):
        """Text table: IoU per class, then SSIM, Fréchet and SWD x 1e3 per level."""
        lines = []
        width = max(len(name) for name in self.class_names)
        lines.append("Per-class IoU")
        for name, value in zip(self.class_names, self.per_class_iou):
            shown = "   n/a" if np.isnan(value) else f"{value:6.3f}"
            lines.append(f"  {name:<{width}}  {shown}")
        lines.append(f"  {'mIoU':<{width}}  {self.miou:6.3f}")
        header = ["SSIM", "FD"] + [str(res) for res, _ in self.swd_per_level] + ["avg"]
        values = [f"{self.ssim:.3f}", "n/a" if self.frechet is None else f"{self.frechet:.3f}"]
        values += [f"{value * 1e3:.3f}" for _, value in self.swd_per_level] + [f"{self.swd_avg * 1e3:.3f}"]
        widths = [max(len(h), len(v)) for h, v in zip(header, values)]
        lines.append("")
        lines.append("Image metrics (SWD x 1e3)")
        lines.append("  " + " | ".join(h.rjust(w) for h, w in zip(header, widths)))
        lines.append("  " + " | ".join(v.rjust(w) for v, w in zip(values, widths)))
        lines.append(f"  note: {self.note}")
        return "\n".join(lines)


def named_classes(ignore_id=0):
    """Shared class names in report column order, without the ignored class."""
    return [name for i, name in enumerate(SHARED_CLASSES) if i != ignore_id]
