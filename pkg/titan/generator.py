# titan/generator.py

import math

import numpy as np

from autodiff import (
    Tensor,
    avg_pool2d,
    bilinear_upsample,
    concat,
    dropout,
    leaky_relu,
    pixel_shuffle,
    softmax,
)
from exceptions import TensorError

from .config import GeneratorConfig
from .layers import Conv2d, InstanceNorm, Module, ModuleList


class ConvNormAct(Module):
    """conv -> leaky ReLU -> instance norm."""

    def __init__(
        self, in_channels, out_channels, kernel_size, rng, dilation=1, slope=0.1, init="normal", dtype=np.float32
    ):
        super().__init__()
        self.conv = Conv2d(
            in_channels, out_channels, kernel_size, rng, dilation=dilation, init=init, dtype=dtype
        )
        self.norm = InstanceNorm(out_channels, dtype=dtype)
        self.slope = slope

    def forward(self, x):
        return self.norm(leaky_relu(self.conv(x), self.slope))


class MergeModule(Module):
    """Per-input 1x1 convolutions, concatenation, then a fusing 1x1 convolution."""

    def __init__(self, config: GeneratorConfig, rng, init, dtype):
        super().__init__()
        width, slope = config.base_width, config.leaky_slope
        self.slope = slope
        self.range_in = self.segmap_in = None
        branches = 0
        if config.use_range_view:
            self.range_in = Conv2d(config.range_channels, width, 1, rng, init=init, dtype=dtype)
            branches += 1
        if config.use_segmap:
            self.segmap_in = Conv2d(config.num_classes, width, 1, rng, init=init, dtype=dtype)
            branches += 1
        self.fuse = Conv2d(branches * width, width, 1, rng, init=init, dtype=dtype)

    def forward(self, range_view, segmap):
        parts = []
        if self.range_in is not None:
            parts.append(leaky_relu(self.range_in(range_view), self.slope))
        if self.segmap_in is not None:
            parts.append(leaky_relu(self.segmap_in(segmap), self.slope))
        merged = parts[0] if len(parts) == 1 else concat(parts, axis=1)
        return leaky_relu(self.fuse(merged), self.slope)


class ContextModule(Module):
    """Residual pair of 3x3 convolutions (dilation 1 then 2) around a 1x1 shortcut."""

    def __init__(self, channels, rng, slope, init, dtype):
        super().__init__()
        self.slope = slope
        self.shortcut = Conv2d(channels, channels, 1, rng, init=init, dtype=dtype)
        self.conv1 = ConvNormAct(channels, channels, 3, rng, 1, slope, init, dtype)
        self.conv2 = ConvNormAct(channels, channels, 3, rng, 2, slope, init, dtype)

    def forward(self, x):
        shortcut = leaky_relu(self.shortcut(x), self.slope)
        return shortcut + self.conv2(self.conv1(x))


class EncoderBlock(Module):
    """
    Parallel 3x3 convolutions with dilation 1, 2 and 3 (receptive fields 3, 5, 7),
    fused by a 1x1 convolution and added to a 1x1 shortcut.
    """

    def __init__(self, in_channels, out_channels, rng, slope, p, use_dropout, pooling, init, dtype):
        super().__init__()
        self.p, self.use_dropout, self.pooling = p, use_dropout, pooling
        self.shortcut = Conv2d(in_channels, out_channels, 1, rng, init=init, dtype=dtype)
        self.branches = ModuleList(
            ConvNormAct(in_channels, out_channels, 3, rng, d, slope, init, dtype) for d in (1, 2, 3)
        )
        self.fuse = ConvNormAct(3 * out_channels, out_channels, 1, rng, 1, slope, init, dtype)
        self.slope = slope

    def forward(self, x, rng=None):
        shortcut = leaky_relu(self.shortcut(x), self.slope)
        features = self.fuse(concat([branch(x) for branch in self.branches], axis=1)) + shortcut
        if self.use_dropout:
            features = dropout(features, self.p, self.training, rng)
        if not self.pooling:
            return features, features
        return avg_pool2d(features, 2), features


class DecoderBlock(Module):
    """Pixel shuffle by 2, concatenate the skip, refine with 3x3 convolutions (dilation 1 then 2)."""

    def __init__(self, in_channels, skip_channels, out_channels, rng, slope, p, use_dropout, init, dtype):
        super().__init__()
        self.p, self.use_dropout = p, use_dropout
        merged = in_channels // 4 + skip_channels
        self.conv1 = ConvNormAct(merged, out_channels, 3, rng, 1, slope, init, dtype)
        self.conv2 = ConvNormAct(out_channels, out_channels, 3, rng, 2, slope, init, dtype)
        self.fuse = ConvNormAct(2 * out_channels, out_channels, 1, rng, 1, slope, init, dtype)

    def forward(self, x, skip, rng=None):
        up = pixel_shuffle(x, 2)
        if up.shape[2:] != skip.shape[2:]:
            raise TensorError(f"decoder size mismatch: upsampled {up.shape} vs skip {skip.shape}")
        refined1 = self.conv1(concat([up, skip], axis=1))
        refined2 = self.conv2(refined1)
        features = self.fuse(concat([refined1, refined2], axis=1))
        if self.use_dropout:
            features = dropout(features, self.p, self.training, rng)
        return features


class Generator(Module):
    """
    Conditional range-view to camera-view segment translator.

    ``forward`` returns class logits of shape (N, C, output_height, output_width);
    ``features`` stops before the bilinear head so callers can trim padding first.
    """

    def __init__(self, config: GeneratorConfig, rng, init="normal", dtype=np.float32):
        super().__init__()
        self.config = config.validate()
        b, slope, p = config.base_width, config.leaky_slope, config.dropout
        self.merge = MergeModule(config, rng, init, dtype)
        self.context = ContextModule(b, rng, slope, init, dtype)

        widths = config.stage_widths()
        self.encoder = ModuleList()
        in_channels = b
        for i, out_channels in enumerate(widths):
            self.encoder.append(
                EncoderBlock(in_channels, out_channels, rng, slope, p, i > 0, True, init, dtype)
            )
            in_channels = out_channels
        self.bottleneck = EncoderBlock(in_channels, in_channels, rng, slope, p, True, False, init, dtype)

        self.decoder = ModuleList()
        for i in reversed(range(config.num_stages)):
            out_channels = b * 2**i
            self.decoder.append(
                DecoderBlock(in_channels, widths[i], out_channels, rng, slope, p, i > 0, init, dtype)
            )
            in_channels = out_channels
        self.head = Conv2d(in_channels, config.num_classes, 1, rng, init=init, dtype=dtype)

    def features(self, range_view, segmap, rng=None):
        """Logits at input resolution, before the bilinear head."""
        reference = range_view if range_view is not None else segmap
        height, width = reference.shape[-2:]
        step = self.config.downsampling
        if height % step or width % step:
            raise TensorError(f"input {height}x{width} must be divisible by {step}")

        x = self.context(self.merge(range_view, segmap))
        skips = []
        for block in self.encoder:
            x, skip = block(x, rng)
            skips.append(skip)
        x, _ = self.bottleneck(x, rng)
        for block, skip in zip(self.decoder, reversed(skips)):
            x = block(x, skip, rng)
        return self.head(x)

    def upsample(self, logits, width_ratio=1):
        config = self.config
        return bilinear_upsample(logits, (config.output_height, config.output_width * width_ratio))

    def forward(self, range_view, segmap, rng=None):
        return self.upsample(self.features(range_view, segmap, rng))

    def probabilities(self, range_view, segmap, rng=None):
        return softmax(self.forward(range_view, segmap, rng), axis=1)

    def receptive_field_radius(self):
        """Columns of input context on either side that can influence an output pixel."""
        radius, jump = 3.0, 1.0
        for _ in range(self.config.num_stages):
            radius += 3 * jump + 0.5 * jump
            jump *= 2
        radius += 3 * jump
        for _ in range(self.config.num_stages):
            jump /= 2
            radius += 3 * jump
        radius += jump
        return int(math.ceil(radius))


def build_generator(config: GeneratorConfig, rng, init="normal", dtype=np.float32):
    return Generator(config, rng, init, dtype)


def as_inputs(range_view, segmap_one_hot, dtype=np.float32):
    """Wrap batch arrays as constant Tensors of the model dtype."""
    range_tensor = Tensor(np.asarray(range_view, dtype=dtype))
    if isinstance(segmap_one_hot, Tensor):
        segmap_one_hot = segmap_one_hot.data
    segmap_tensor = Tensor(np.asarray(segmap_one_hot, dtype=dtype))
    return range_tensor, segmap_tensor
