import numpy as np
import pytest
from conftest import assert_gradients_match, numeric_gradient

from autodiff import (
    Adam,
    AdamState,
    Tensor,
    adam_step,
    avg_pool2d,
    backward,
    bilinear_upsample,
    concat,
    conv2d,
    dropout,
    grad,
    instance_norm,
    l2_norm,
    leaky_relu,
    mean,
    no_grad,
    pixel_shuffle,
    pixel_unshuffle,
    reshape,
    softmax,
    sum_,
)
from autodiff.checkpoint import decode_tensors, encode_tensors
from autodiff.tensor import exp, log, matmul, pad_axis, slice_axis, sqrt, transpose
from exceptions import CheckpointError, TensorError
from utils import philox

SEEDS = range(20)

ELEMENTWISE = {
    "add_broadcast": (lambda a, b: a + b, [(3, 1), (1, 4)]),
    "sub": (lambda a, b: a - b, [(2, 3), (2, 3)]),
    "mul_broadcast": (lambda a, b: a * b, [(2, 3), (3,)]),
    "div": (lambda a, b: a / (b * b + 1.0), [(2, 3), (2, 3)]),
    "power": (lambda a: a**3, [(4,)]),
    "exp": (lambda a: exp(a), [(2, 2)]),
    "log": (lambda a: log(a * a + 0.5), [(5,)]),
    "sqrt": (lambda a: sqrt(a * a + 0.5), [(5,)]),
    "neg": (lambda a: -a * 2.0, [(3,)]),
}

STRUCTURAL = {
    "sum_axis": (lambda a: sum_(a, axis=1) * sum_(a, axis=1), [(3, 4)]),
    "mean_keepdims": (lambda a: a * mean(a, axis=(0, 2), keepdims=True), [(2, 3, 2)]),
    "reshape": (lambda a: reshape(a, (6, 2)) * reshape(a, (6, 2)), [(3, 4)]),
    "transpose": (lambda a, b: transpose(a, (1, 0)) * b, [(3, 2), (2, 3)]),
    "matmul": (lambda a, b: matmul(a, b), [(3, 4), (4, 2)]),
    "batched_matmul": (lambda a, b: matmul(a, b), [(2, 3, 4), (4, 2)]),
    "concat": (lambda a, b: concat([a, b], axis=1) ** 2, [(2, 3), (2, 1)]),
    "slice_pad": (lambda a: pad_axis(slice_axis(a, 1, 1, 3), 0, 1, 2) ** 2, [(2, 4)]),
    "l2_norm": (lambda a: l2_norm(a, axis=1), [(3, 4)]),
}

NETWORK = {
    "conv2d": (lambda x, w, b: conv2d(x, w, b, padding=1), [(2, 2, 5, 5), (3, 2, 3, 3), (3,)]),
    "conv2d_strided": (lambda x, w: conv2d(x, w, stride=2, padding=1), [(1, 2, 6, 6), (2, 2, 4, 4)]),
    "conv2d_dilated": (lambda x, w: conv2d(x, w, dilation=2, padding=2), [(1, 1, 6, 7), (2, 1, 3, 3)]),
    "pixel_shuffle": (lambda x: pixel_shuffle(x, 2) ** 2, [(1, 8, 2, 3)]),
    "pixel_unshuffle": (lambda x: pixel_unshuffle(x, 2) ** 2, [(1, 2, 4, 6)]),
    "bilinear": (lambda x: bilinear_upsample(x, (5, 7)) ** 2, [(1, 2, 3, 4)]),
    "instance_norm": (lambda x, w: instance_norm(x) * w, [(2, 2, 3, 3), (2, 2, 3, 3)]),
    "leaky_relu": (lambda x: leaky_relu(x, 0.2) ** 2, [(3, 4)]),
    "softmax": (lambda x, w: softmax(x, axis=1) * w, [(2, 4, 3), (2, 4, 3)]),
    "avg_pool": (lambda x: avg_pool2d(x, 2) ** 2, [(1, 2, 4, 6)]),
}

CASES = {**ELEMENTWISE, **STRUCTURAL, **NETWORK}


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("name", sorted(CASES))
def test_gradients_match_finite_differences(name, seed):
    fn, shapes = CASES[name]
    rng = philox(seed)
    arrays = [rng.standard_normal(shape) for shape in shapes]
    assert_gradients_match(fn, *arrays)


def test_second_order_gradient():
    x = Tensor(np.array([0.5, -1.0, 2.0]), requires_grad=True)
    (first,) = grad(sum_(x**3), [x], create_graph=True)
    np.testing.assert_allclose(first.data, 3 * x.data**2)
    (second,) = grad(sum_(first), [x])
    np.testing.assert_allclose(second.data, 6 * x.data)


def test_gradient_of_gradient_norm_through_conv(rng):
    weight = Tensor(rng.standard_normal((1, 1, 3, 3)), requires_grad=True)
    x = Tensor(rng.standard_normal((1, 1, 4, 4)), requires_grad=True)
    (gx,) = grad(sum_(conv2d(x, weight, padding=1)), [x], create_graph=True)
    penalty = sum_(gx * gx)
    (gw,) = grad(penalty, [weight])

    def penalty_of(w):
        w_t = Tensor(w)
        x_t = Tensor(x.data, requires_grad=True)
        (g,) = grad(sum_(conv2d(x_t, w_t, padding=1)), [x_t])
        return float(np.sum(g.data**2))

    np.testing.assert_allclose(gw.data, numeric_gradient(penalty_of, weight.data), rtol=1e-4, atol=1e-7)


def test_l2_norm_gradient_is_zero_at_origin():
    x = Tensor(np.zeros((2, 3)), requires_grad=True)
    (g,) = grad(sum_(l2_norm(x, axis=1)), [x])
    assert np.all(g.data == 0)
    assert np.all(np.isfinite(g.data))


def test_backward_accumulates_on_leaves():
    a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    b = Tensor(np.array([3.0, 4.0]), requires_grad=True)
    backward(sum_(a * b))
    np.testing.assert_allclose(a.grad, [3.0, 4.0])
    np.testing.assert_allclose(b.grad, [1.0, 2.0])
    backward(sum_(a))
    np.testing.assert_allclose(a.grad, [4.0, 5.0])


def test_backward_requires_scalar():
    a = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(TensorError):
        backward(a * 2.0)


def test_unreachable_input_gets_zero_gradient():
    a = Tensor(np.ones(2), requires_grad=True)
    b = Tensor(np.ones(2), requires_grad=True)
    _, gb = grad(sum_(a * 2.0), [a, b])
    assert np.all(gb.data == 0)


def test_shape_errors():
    with pytest.raises(TensorError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(TensorError):
        sum_(Tensor(np.ones((2, 3))), axis=2)
    with pytest.raises(TensorError):
        conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))
    with pytest.raises(TensorError):
        bilinear_upsample(Tensor(np.ones((1, 1, 4, 4))), (2, 8))


def test_no_grad_records_nothing():
    a = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        b = a * 3.0
    assert not b.requires_grad


def test_pixel_shuffle_layout():
    x = np.arange(8, dtype=np.float64).reshape(1, 4, 1, 2)
    out = pixel_shuffle(Tensor(x), 2).data
    assert out.shape == (1, 1, 2, 4)
    # channel k = 2 * row + col of the sub-pixel
    assert out[0, 0].tolist() == [[0, 2, 1, 3], [4, 6, 5, 7]]
    np.testing.assert_array_equal(pixel_unshuffle(Tensor(out), 2).data, x)


def test_bilinear_upsample_identity_and_constant():
    x = Tensor(np.random.default_rng(0).standard_normal((1, 2, 3, 4)))
    assert bilinear_upsample(x, (3, 4)) is x
    constant = bilinear_upsample(Tensor(np.full((1, 1, 2, 2), 5.0)), (4, 6))
    np.testing.assert_allclose(constant.data, 5.0)


def test_softmax_rows_sum_to_one():
    x = Tensor(np.array([[[1000.0], [1001.0]]]))
    probs = softmax(x, axis=1).data
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)
    assert np.all(np.isfinite(probs))


def test_dropout_modes(rng):
    x = Tensor(np.ones((1000,)))
    assert dropout(x, 0.5, False, rng) is x
    dropped = dropout(x, 0.5, True, rng).data
    assert set(np.unique(dropped)) <= {0.0, 2.0}
    assert 0.4 < np.mean(dropped == 0) < 0.6
    with pytest.raises(TensorError):
        dropout(x, 1.0, True, rng)


def test_adam_first_step_moves_by_learning_rate():
    param = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    state = AdamState(lr=0.1)
    adam_step({"w": param}, {"w": np.array([2.0, -0.5])}, state)
    np.testing.assert_allclose(param.data, [0.9, -0.9], atol=1e-6)
    assert state.t == 1


def test_adam_optimiser_minimises_a_quadratic():
    param = Tensor(np.array([3.0]), requires_grad=True)
    optimiser = Adam({"w": param}, lr=0.1, betas=(0.9, 0.999))
    for _ in range(1000):
        optimiser.zero_grad()
        backward(sum_((param - 1.0) ** 2))
        optimiser.step()
    assert abs(param.data[0] - 1.0) < 5e-2


def test_tensor_encoding_round_trip():
    tensors = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "scalar": np.float32(2.5)}
    decoded = decode_tensors(encode_tensors(tensors))
    assert list(decoded) == ["a", "scalar"]
    np.testing.assert_array_equal(decoded["a"], tensors["a"])
    assert decoded["scalar"].shape == () and decoded["scalar"] == 2.5


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda b: b"XXXX" + b[4:], "magic"),
        (lambda b: b[:4] + (9).to_bytes(4, "little") + b[8:], "version"),
        (lambda b: b[:-3], "truncated"),
        (lambda b: b + b"\x00", "trailing"),
    ],
)
def test_tensor_decoding_errors(mutate, message):
    payload = encode_tensors({"w": np.ones((2, 2), dtype=np.float32)})
    with pytest.raises(CheckpointError, match=message):
        decode_tensors(mutate(payload))
