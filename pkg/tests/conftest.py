import numpy as np
import pytest

import database
from autodiff import Tensor, grad, sum_
from pipeline.synth import SyntheticSceneConfig
from titan.config import GeneratorConfig, TrainConfig
from utils import philox


@pytest.fixture
def rng():
    return philox(1234)


@pytest.fixture
def registry(tmp_path):
    """Run registry backed by a throwaway SQLite file."""
    database.configure(f"sqlite:///{tmp_path / 'registry.db'}")
    database.init_db()
    yield database
    database.engine.dispose()


@pytest.fixture
def tiny_scene():
    """16 beams x 128 azimuth bins; the 90-degree camera crop is 32 columns wide."""
    return SyntheticSceneConfig(
        beams=16,
        azimuth_steps=128,
        image_height=16,
        image_width=32,
        max_boxes=2,
        max_cylinders=2,
    ).validate()


@pytest.fixture
def tiny_generator_config():
    return GeneratorConfig(
        base_width=4,
        num_stages=2,
        input_height=16,
        input_width=32,
        output_height=16,
        output_width=32,
        dropout=0.0,
    ).validate()


@pytest.fixture
def tiny_train_config():
    return TrainConfig(
        seed=7,
        max_steps=3,
        batch_size=2,
        base_width=4,
        num_stages=2,
        disc_base_width=4,
        dropout=0.0,
        log_every=1,
        dtype="float64",
    ).validate()


def numeric_gradient(fn, value, eps=1e-6):
    """Central differences of the scalar ``fn`` at the array ``value``."""
    value = np.array(value, dtype=np.float64)
    gradient = np.zeros_like(value)
    for index in np.ndindex(value.shape):
        original = value[index]
        value[index] = original + eps
        upper = fn(value)
        value[index] = original - eps
        lower = fn(value)
        value[index] = original
        gradient[index] = (upper - lower) / (2 * eps)
    return gradient


def assert_gradients_match(fn, *arrays, rtol=1e-4, atol=1e-7):
    """
    Compare reverse-mode gradients of ``sum(fn(*tensors))`` with central differences.

    ``fn`` maps Tensors to a Tensor; every array argument is checked.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    analytic = grad(sum_(fn(*leaves)), leaves)
    for position, array in enumerate(arrays):

        def scalar(value, position=position):
            args = [Tensor(a) for a in arrays]
            args[position] = Tensor(value)
            return float(np.sum(fn(*args).data))

        numeric = numeric_gradient(scalar, array)
        np.testing.assert_allclose(analytic[position].data, numeric, rtol=rtol, atol=atol)
