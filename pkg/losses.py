# losses.py

from dataclasses import asdict, dataclass

import numpy as np

from autodiff import Tensor, as_tensor, grad, l2_norm, mean, reshape, sum_
from autodiff.tensor import transpose
from exceptions import LossError

GP_WEIGHT = 10.0


@dataclass
class LossReport:
    d_loss: float
    g_adv_loss: float
    lovasz_loss: float
    gp_term: float
    total_g: float

    def as_dict(self):
        return asdict(self)

    def is_finite(self):
        return all(np.isfinite(value) for value in asdict(self).values())


# ----------------------------------------------------------------- Lovász
def lovasz_grad(errors_sorted, gt_sorted):
    """
    Weights of the Lovász extension of the Jaccard loss at a sorted error vector.

    :param errors_sorted: Errors in descending order
    :param gt_sorted: Binary ground-truth membership, permuted like the errors
    :return: Weight vector g with g_k = J(first k) - J(first k-1)
    """
    errors_sorted = np.asarray(errors_sorted, dtype=np.float64)
    gt_sorted = np.asarray(gt_sorted, dtype=np.float64)
    if errors_sorted.shape != gt_sorted.shape or errors_sorted.ndim != 1 or not errors_sorted.size:
        raise LossError(
            f"lovasz_grad expects two equal-length non-empty vectors, got "
            f"{errors_sorted.shape} and {gt_sorted.shape}"
        )
    if np.any(np.diff(errors_sorted) > 0):
        raise LossError("lovasz_grad expects errors sorted in descending order")

    gts = gt_sorted.sum()
    if gts == 0:
        return np.zeros_like(gt_sorted)
    intersection = gts - np.cumsum(gt_sorted)
    union = gts + np.cumsum(1.0 - gt_sorted)
    jaccard = 1.0 - intersection / union
    jaccard[1:] = jaccard[1:] - jaccard[:-1]
    return jaccard


def descending_order(errors):
    """Stable descending sort; equal errors keep their original index order."""
    return np.argsort(-np.asarray(errors), kind="stable")


def lovasz_extension(errors, gt):
    """Value of the Jaccard-loss Lovász extension at ``errors`` for one class."""
    errors = np.asarray(errors, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    order = descending_order(errors)
    return float(np.dot(errors[order], lovasz_grad(errors[order], gt[order])))


def jaccard_loss(error_set, gt):
    """Discrete Jaccard loss |M| / |gt ∪ M| of a binary error set against the ground truth."""
    error_set = np.asarray(error_set, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    union = np.count_nonzero(gt | error_set)
    return np.count_nonzero(error_set) / union if union else 0.0


def _flatten_probabilities(probs, labels):
    probs = as_tensor(probs)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim == 3:
        probs = reshape(probs, (1,) + probs.shape)
        labels = labels.reshape((1,) + labels.shape)
    if probs.ndim != 4:
        raise LossError(f"probabilities must be (C, h, w) or (N, C, h, w), got {probs.shape}")
    n, c, h, w = probs.shape
    if labels.shape != (n, h, w):
        raise LossError(f"label shape {labels.shape} does not match probabilities {probs.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LossError(f"labels must be channel indices in [0, {c - 1}]")
    row_sums = probs.data.sum(axis=1)
    if not np.allclose(row_sums, 1.0, rtol=0.0, atol=1e-5):
        raise LossError("probability rows are not normalized (channel sums differ from 1)")
    flat = reshape(transpose(probs, (1, 0, 2, 3)), (c, n * h * w))
    return flat, labels.reshape(-1)


def lovasz_softmax(probs, labels, ignore_id=0):
    """
    Lovász-Softmax loss over every pixel of ``probs``.

    :param probs: Tensor (C, h, w) or (N, C, h, w) of per-pixel class probabilities
    :param labels: Channel-index grid matching the spatial shape
    :param ignore_id: Channel excluded from the loss and whose pixels are ignored; None keeps all
    :return: Scalar Tensor, the mean over ground-truth-present classes
    """
    flat, labels = _flatten_probabilities(probs, labels)
    num_classes, num_pixels = flat.shape
    valid = np.ones(num_pixels, dtype=bool) if ignore_id is None else labels != ignore_id

    foreground = np.zeros((num_classes, num_pixels), dtype=flat.dtype)
    foreground[labels, np.arange(num_pixels)] = 1.0
    foreground[:, ~valid] = 0.0

    weights = np.zeros((num_classes, num_pixels), dtype=flat.dtype)
    valid_index = np.flatnonzero(valid)
    present = 0
    for c in range(num_classes):
        if c == ignore_id:
            continue
        fg = foreground[c, valid_index]
        if not fg.any():
            continue
        present += 1
        errors = np.abs(fg - flat.data[c, valid_index])
        order = descending_order(errors)
        weights[c, valid_index[order]] = lovasz_grad(errors[order], fg[order])

    if present == 0:
        return Tensor(np.zeros((), dtype=flat.dtype))
    # |fg - p| as an affine function of p
    errors = flat * Tensor(1.0 - 2.0 * foreground) + Tensor(foreground)
    return sum_(errors * Tensor(weights)) / float(present)


def mse_guiding_loss(probs, labels, ignore_id=0):
    """Mean squared error between probabilities and the one-hot target on non-ignored pixels."""
    flat, labels = _flatten_probabilities(probs, labels)
    num_classes, num_pixels = flat.shape
    valid = np.ones(num_pixels, dtype=bool) if ignore_id is None else labels != ignore_id
    count = np.count_nonzero(valid)
    if count == 0:
        return Tensor(np.zeros((), dtype=flat.dtype))
    target = np.zeros((num_classes, num_pixels), dtype=flat.dtype)
    target[labels, np.arange(num_pixels)] = 1.0
    diff = (flat - Tensor(target)) * Tensor(valid.astype(flat.dtype))
    return sum_(diff * diff) / float(count * num_classes)


# ---------------------------------------------------------------- WGAN-GP
def patch_mean(scores):
    """Reduce a patch grid of critic scores to one score per sample."""
    scores = as_tensor(scores)
    if scores.ndim <= 1:
        return scores
    return mean(reshape(scores, (scores.shape[0], -1)), axis=1)


def _check_batches(real, fake):
    real, fake = as_tensor(real), as_tensor(fake)
    if real.shape != fake.shape:
        raise LossError(f"real and fake batches differ in shape: {real.shape} vs {fake.shape}")
    return real, fake


def gradient_penalty(discriminator, real_batch, fake_batch, lam, rng):
    """
    λ · mean over samples of (‖∇D(x̂)‖₂ − 1)² at random interpolates x̂.

    :param discriminator: Callable mapping an (N, ...) Tensor to per-sample or per-patch scores
    :param real_batch: Tensor (N, ...)
    :param fake_batch: Tensor (N, ...)
    :param lam: Penalty weight
    :param rng: numpy Generator for the interpolation coefficients
    :return: Scalar Tensor, differentiable w.r.t. the discriminator parameters
    """
    real, fake = _check_batches(real_batch, fake_batch)
    n = real.shape[0]
    eps = rng.random(n).astype(real.dtype).reshape((n,) + (1,) * (real.ndim - 1))
    interpolates = Tensor(eps * real.data + (1.0 - eps) * fake.data, requires_grad=True)

    scores = patch_mean(discriminator(interpolates))
    (gradients,) = grad(sum_(scores), [interpolates], create_graph=True)
    norms = l2_norm(reshape(gradients, (n, -1)), axis=1)
    deviation = norms - 1.0
    return mean(deviation * deviation) * float(lam)


def critic_terms(discriminator, real, fake, lam, rng):
    """(Wasserstein estimate E[D(fake)] - E[D(real)], gradient penalty) for one critic step."""
    real, fake = _check_batches(real, fake)
    wasserstein = mean(patch_mean(discriminator(fake))) - mean(patch_mean(discriminator(real)))
    return wasserstein, gradient_penalty(discriminator, real, fake, lam, rng)


def wgan_gp_d_loss(discriminator, real, fake, lam, rng):
    wasserstein, penalty = critic_terms(discriminator, real, fake, lam, rng)
    return wasserstein + penalty


def wgan_g_loss(discriminator, fake):
    return -mean(patch_mean(discriminator(as_tensor(fake))))


def total_generator_loss(adv, guiding):
    """Unweighted sum of the adversarial and guiding terms."""
    return adv + guiding
