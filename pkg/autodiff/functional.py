# autodiff/functional.py

import numpy as np

from exceptions import TensorError

from .tensor import (
    Tensor,
    _normalize_axis,
    as_tensor,
    concat,
    conv_output_size,
    exp,
    im2col,
    matmul,
    mean,
    pair,
    reshape,
    sqrt,
    sum_,
    transpose,
)


def conv2d(x, weight, bias=None, stride=1, dilation=1, padding=0):
    """
    2-D cross-correlation with explicit symmetric zero padding.

    :param x: Tensor (N, C, H, W)
    :param weight: Tensor (O, C, kh, kw)
    :param bias: Optional Tensor (O,)
    :param stride: int or (sh, sw)
    :param dilation: int or (dh, dw)
    :param padding: int or (ph, pw)
    :return: Tensor (N, O, Ho, Wo)
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise TensorError(f"conv2d expects 4-d input and kernel, got {x.shape} and {weight.shape}")
    out_channels, in_channels, kh, kw = weight.shape
    if x.shape[1] != in_channels:
        raise TensorError(
            f"conv2d channel mismatch: input has {x.shape[1]}, kernel expects {in_channels}"
        )
    stride, dilation, padding = pair(stride), pair(dilation), pair(padding)
    n, _, h, w = x.shape
    out_h = conv_output_size(h, kh, stride[0], dilation[0], padding[0])
    out_w = conv_output_size(w, kw, stride[1], dilation[1], padding[1])

    cols = im2col(x, (kh, kw), stride, dilation, padding)
    flat_kernel = reshape(weight, (out_channels, in_channels * kh * kw))
    out = reshape(matmul(flat_kernel, cols), (n, out_channels, out_h, out_w))
    if bias is not None:
        out = out + reshape(as_tensor(bias, x), (1, out_channels, 1, 1))
    return out


def pixel_shuffle(x, r):
    """(N, C*r*r, H, W) -> (N, C, r*H, r*W) sub-pixel rearrangement."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    if c % (r * r):
        raise TensorError(f"pixel_shuffle: {c} channels not divisible by r^2 = {r * r}")
    out_c = c // (r * r)
    x = reshape(x, (n, out_c, r, r, h, w))
    x = transpose(x, (0, 1, 4, 2, 5, 3))
    return reshape(x, (n, out_c, h * r, w * r))


def pixel_unshuffle(x, r):
    """Inverse index map of pixel_shuffle."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h % r or w % r:
        raise TensorError(f"pixel_unshuffle: spatial dims {h}x{w} not divisible by {r}")
    x = reshape(x, (n, c, h // r, r, w // r, r))
    x = transpose(x, (0, 1, 3, 5, 2, 4))
    return reshape(x, (n, c * r * r, h // r, w // r))


def interpolation_matrix(in_size, out_size, dtype=np.float64):
    """Row-stochastic (out_size, in_size) matrix of align-corners-false linear weights."""
    scale = in_size / out_size
    matrix = np.zeros((out_size, in_size), dtype=dtype)
    src = (np.arange(out_size) + 0.5) * scale - 0.5
    src = np.maximum(src, 0.0)
    lo = np.minimum(np.floor(src).astype(np.int64), in_size - 1)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, lo), 1.0 - frac)
    np.add.at(matrix, (rows, hi), frac)
    return matrix


def bilinear_upsample(x, size):
    """
    Bilinear upsampling of an (N, C, H, W) tensor to ``size`` = (Ho, Wo).

    :raises TensorError: when either target dimension is smaller than the source
    """
    x = as_tensor(x)
    out_h, out_w = size
    h, w = x.shape[-2:]
    if out_h < h or out_w < w:
        raise TensorError(f"bilinear_upsample cannot downscale {h}x{w} to {out_h}x{out_w}")
    if (out_h, out_w) == (h, w):
        return x
    rows = Tensor(interpolation_matrix(h, out_h, x.dtype))
    cols = Tensor(interpolation_matrix(w, out_w, x.dtype).T)
    return matmul(matmul(rows, x), cols)


def instance_norm(x, eps=1e-5):
    """Per-(sample, channel) standardisation over the spatial axes."""
    x = as_tensor(x)
    centered = x - mean(x, axis=(2, 3), keepdims=True)
    variance = mean(centered * centered, axis=(2, 3), keepdims=True)
    return centered / sqrt(variance + eps)


def normalize_with(x, running_mean, running_var, eps=1e-5):
    """Standardise channels of ``x`` with fixed statistics of shape (C,)."""
    x = as_tensor(x)
    shape = (1, -1, 1, 1)
    mu = Tensor(np.asarray(running_mean, dtype=x.dtype).reshape(shape))
    scale = Tensor((1.0 / np.sqrt(np.asarray(running_var) + eps)).astype(x.dtype).reshape(shape))
    return (x - mu) * scale


def leaky_relu(x, slope=0.2):
    x = as_tensor(x)
    factor = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return x * Tensor(factor)


def dropout(x, p, training, rng):
    """
    Inverted dropout: kept activations are scaled by 1/(1-p) while training.

    :param rng: numpy Generator the keep-mask is drawn from
    """
    x = as_tensor(x)
    if not 0.0 <= p < 1.0:
        raise TensorError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return x * Tensor(keep)


def softmax(x, axis=1):
    x = as_tensor(x)
    (axis,) = _normalize_axis(axis, x.ndim)
    shifted = x - Tensor(np.max(x.data, axis=axis, keepdims=True))
    e = exp(shifted)
    return e / sum_(e, axis=axis, keepdims=True)


def avg_pool2d(x, k=2):
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h % k or w % k:
        raise TensorError(f"avg_pool2d: {h}x{w} not divisible by {k}")
    return mean(reshape(x, (n, c, h // k, k, w // k, k)), axis=(3, 5))


def argmax(x, axis=1):
    """Index of the largest entry; ties resolve to the lowest index."""
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    return np.argmax(data, axis=axis)


__all__ = [
    "argmax",
    "avg_pool2d",
    "bilinear_upsample",
    "concat",
    "conv2d",
    "dropout",
    "instance_norm",
    "interpolation_matrix",
    "leaky_relu",
    "normalize_with",
    "pixel_shuffle",
    "pixel_unshuffle",
    "softmax",
]
