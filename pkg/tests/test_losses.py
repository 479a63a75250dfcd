import itertools
import math

import numpy as np
import pytest
from conftest import assert_gradients_match, numeric_gradient

from autodiff import Tensor, grad, softmax, sum_
from exceptions import LossError
from losses import (
    GP_WEIGHT,
    LossReport,
    critic_terms,
    gradient_penalty,
    jaccard_loss,
    lovasz_extension,
    lovasz_grad,
    lovasz_softmax,
    mse_guiding_loss,
    total_generator_loss,
    wgan_g_loss,
    wgan_gp_d_loss,
)
from utils import philox


def binary_vectors(n):
    return [np.array(bits, dtype=np.float64) for bits in itertools.product((0.0, 1.0), repeat=n)]


def level_set_extension(errors, gt):
    """Lovász extension via its level-set integral, independent of any sort order."""
    levels = sorted(set(errors.tolist()) | {0.0}, reverse=True)
    value = 0.0
    for upper, lower in zip(levels, levels[1:]):
        value += (upper - lower) * jaccard_loss(errors >= upper, gt)
    return value


@pytest.mark.parametrize("n", range(1, 7))
def test_extension_matches_jaccard_at_every_vertex(n):
    for gt in binary_vectors(n):
        if not gt.any():
            continue
        for errors in binary_vectors(n):
            assert abs(lovasz_extension(errors, gt) - jaccard_loss(errors.astype(bool), gt)) <= 1e-12


@pytest.mark.parametrize("n", range(7, 11))
def test_extension_matches_jaccard_at_every_vertex_long_vectors(n):
    rng = philox(n)
    patterns = [np.eye(n)[0], np.ones(n)] + [(rng.random(n) < 0.5).astype(np.float64) for _ in range(4)]
    for gt in patterns:
        if not gt.any():
            continue
        for errors in binary_vectors(n):
            assert abs(lovasz_extension(errors, gt) - jaccard_loss(errors.astype(bool), gt)) <= 1e-12


def test_lovasz_grad_single_error_vertex():
    errors = np.array([1.0, 0.0, 0.0, 0.0])
    gt = np.array([1.0, 1.0, 0.0, 0.0])
    assert float(np.dot(errors, lovasz_grad(errors, gt))) == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(20))
def test_lovasz_grad_weights_sum_to_one(seed):
    rng = philox(seed)
    gt = (rng.random(12) < 0.4).astype(np.float64)
    gt[0] = 1.0
    errors = np.sort(rng.random(12))[::-1]
    assert lovasz_grad(errors, gt).sum() == pytest.approx(1.0)


def test_lovasz_grad_empty_ground_truth_gives_zero_weights():
    assert np.all(lovasz_grad(np.array([0.9, 0.1]), np.zeros(2)) == 0)


@pytest.mark.parametrize(
    "errors, gt",
    [
        ([0.1, 0.9], [1, 0]),
        ([0.5], [1, 0]),
        ([], []),
    ],
)
def test_lovasz_grad_rejects_bad_input(errors, gt):
    with pytest.raises(LossError):
        lovasz_grad(errors, gt)


def test_uniform_two_class_map():
    probs = Tensor(np.full((2, 1, 2), 0.5))
    labels = np.array([[0, 1]])
    loss = lovasz_softmax(probs, labels, ignore_id=None)
    errors = np.array([0.5, 0.5])
    expected = np.mean([level_set_extension(errors, np.array(gt)) for gt in ([1.0, 0.0], [0.0, 1.0])])
    assert loss.item() == pytest.approx(expected)
    assert loss.item() == pytest.approx(0.5)


def random_probabilities(rng, shape):
    logits = rng.standard_normal(shape)
    e = np.exp(logits - logits.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


@pytest.mark.parametrize("seed", range(10))
def test_lovasz_softmax_matches_level_set_oracle(seed):
    rng = philox(seed)
    probs = random_probabilities(rng, (4, 2, 5))
    labels = rng.integers(0, 4, size=(2, 5))
    labels[0, 0] = 1

    loss = lovasz_softmax(Tensor(probs), labels, ignore_id=0).item()

    valid = labels.reshape(-1) != 0
    values = []
    for c in range(1, 4):
        fg = (labels.reshape(-1) == c)[valid].astype(np.float64)
        if not fg.any():
            continue
        errors = np.abs(fg - probs[c].reshape(-1)[valid])
        values.append(level_set_extension(errors, fg))
    assert loss == pytest.approx(np.mean(values), abs=1e-12)


def test_lovasz_softmax_is_permutation_invariant(rng):
    probs = random_probabilities(rng, (3, 1, 12))
    labels = rng.integers(0, 3, size=(1, 12))
    perm = rng.permutation(12)
    base = lovasz_softmax(Tensor(probs), labels, ignore_id=None).item()
    permuted = lovasz_softmax(Tensor(probs[:, :, perm]), labels[:, perm], ignore_id=None).item()
    assert permuted == pytest.approx(base, abs=1e-12)


def test_unlabeled_pixels_do_not_affect_the_loss(rng):
    probs = random_probabilities(rng, (3, 2, 4))
    labels = rng.integers(1, 3, size=(2, 4))
    labels[0, 0] = 0
    altered = probs.copy()
    altered[:, 0, 0] = [0.0, 0.0, 1.0]
    assert lovasz_softmax(Tensor(probs), labels).item() == pytest.approx(lovasz_softmax(Tensor(altered), labels).item())


def test_perfect_prediction_costs_nothing():
    labels = np.array([[1, 2], [2, 1]])
    probs = np.stack([labels == c for c in range(3)]).astype(np.float64)
    assert lovasz_softmax(Tensor(probs), labels).item() == pytest.approx(0.0)
    assert mse_guiding_loss(Tensor(probs), labels).item() == pytest.approx(0.0)


def test_all_ignored_map_gives_zero_loss():
    probs = Tensor(np.full((2, 2, 2), 0.5))
    assert lovasz_softmax(probs, np.zeros((2, 2), dtype=np.int64)).item() == 0.0


@pytest.mark.parametrize("seed", range(20))
def test_lovasz_softmax_gradient(seed):
    rng = philox(seed)
    logits = rng.standard_normal((2, 3, 2, 3))
    labels = rng.integers(0, 3, size=(2, 2, 3))
    assert_gradients_match(lambda x: lovasz_softmax(softmax(x, axis=1), labels), logits)


@pytest.mark.parametrize("seed", range(5))
def test_mse_guiding_loss_gradient(seed):
    rng = philox(seed)
    labels = rng.integers(0, 3, size=(1, 3, 3))
    assert_gradients_match(lambda x: mse_guiding_loss(softmax(x, axis=1), labels), rng.standard_normal((1, 3, 3, 3)))


def test_lovasz_softmax_input_checks():
    with pytest.raises(LossError, match="not normalized"):
        lovasz_softmax(Tensor(np.ones((2, 2, 2))), np.zeros((2, 2), dtype=np.int64))
    with pytest.raises(LossError, match="does not match"):
        lovasz_softmax(Tensor(np.full((2, 2, 2), 0.5)), np.zeros((3, 2), dtype=np.int64))
    with pytest.raises(LossError):
        lovasz_softmax(Tensor(np.full((2, 2, 2), 0.5)), np.full((2, 2), 5))


def linear_critic(weight):
    w = Tensor(weight)
    return lambda x: sum_(x * w, axis=1)


@pytest.fixture
def batches(rng):
    return Tensor(rng.standard_normal((4, 6))), Tensor(rng.standard_normal((4, 6)))


def test_unit_norm_linear_critic_has_no_penalty(batches, rng):
    weight = rng.standard_normal(6)
    weight /= np.linalg.norm(weight)
    penalty = gradient_penalty(linear_critic(weight), *batches, GP_WEIGHT, rng)
    assert abs(penalty.item()) <= 1e-9


def test_constant_critic_pays_full_weight(batches, rng):
    penalty = gradient_penalty(linear_critic(np.zeros(6)), *batches, GP_WEIGHT, rng)
    assert penalty.item() == GP_WEIGHT


@pytest.mark.parametrize("d", [1, 4, 9, 6])
def test_scaled_linear_critic(d, rng):
    real, fake = Tensor(rng.standard_normal((3, d))), Tensor(rng.standard_normal((3, d)))
    penalty = gradient_penalty(linear_critic(np.full(d, 2.0)), real, fake, GP_WEIGHT, rng)
    assert penalty.item() == pytest.approx(GP_WEIGHT * (2 * math.sqrt(d) - 1) ** 2, abs=1e-6)


def test_patch_scores_are_averaged_before_differentiation(rng):
    real, fake = Tensor(rng.standard_normal((2, 1, 2, 2))), Tensor(rng.standard_normal((2, 1, 2, 2)))
    # each of the 4 patch outputs is 4 * x at one pixel, so the per-sample mean has gradient 1 per pixel
    penalty = gradient_penalty(lambda x: x * 4.0, real, fake, GP_WEIGHT, rng)
    assert penalty.item() == pytest.approx(GP_WEIGHT * (2.0 - 1.0) ** 2)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_penalty_is_differentiable_in_critic_parameters(seed):
    rng = philox(seed)
    real, fake = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))

    def penalty_for(weight):
        critic = lambda x: sum_((x * weight) ** 2, axis=1)  # noqa: E731
        return gradient_penalty(critic, Tensor(real), Tensor(fake), GP_WEIGHT, philox(seed + 100))

    weight = Tensor(rng.standard_normal(4), requires_grad=True)
    (analytic,) = grad(penalty_for(weight), [weight])
    numeric = numeric_gradient(lambda w: penalty_for(Tensor(w)).item(), weight.data)
    np.testing.assert_allclose(analytic.data, numeric, rtol=1e-4, atol=1e-6)


def test_constant_critic_loss_is_the_penalty(batches, rng):
    critic = lambda x: sum_(x * 0.0, axis=1) + 3.0  # noqa: E731
    assert wgan_gp_d_loss(critic, *batches, GP_WEIGHT, rng).item() == pytest.approx(GP_WEIGHT)


def test_critic_terms_and_generator_loss(batches, rng):
    real, fake = batches
    critic = linear_critic(np.ones(6))
    wasserstein, penalty = critic_terms(critic, real, fake, GP_WEIGHT, rng)
    assert wasserstein.item() == pytest.approx(fake.data.sum(axis=1).mean() - real.data.sum(axis=1).mean())
    assert penalty.item() >= 0
    assert wgan_g_loss(critic, fake).item() == pytest.approx(-fake.data.sum(axis=1).mean())


def test_mismatched_batches_are_rejected(rng):
    with pytest.raises(LossError):
        gradient_penalty(linear_critic(np.ones(3)), Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3))), GP_WEIGHT, rng)


def test_total_generator_loss_and_report():
    total = total_generator_loss(Tensor(np.array(-0.5)), Tensor(np.array(0.75)))
    assert total.item() == pytest.approx(0.25)
    report = LossReport(d_loss=1.0, g_adv_loss=-0.5, lovasz_loss=0.75, gp_term=0.1, total_g=0.25)
    assert report.is_finite()
    assert report.as_dict()["total_g"] == 0.25
    assert not LossReport(math.nan, 0.0, 0.0, 0.0, 0.0).is_finite()
