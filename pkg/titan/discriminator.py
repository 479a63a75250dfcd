# titan/discriminator.py

import numpy as np

from autodiff import bilinear_upsample, concat, leaky_relu

from .config import DiscriminatorConfig
from .layers import Conv2d, Module, ModuleList


class Discriminator(Module):
    """
    Conditional patch critic.

    The LiDAR condition is resized to the candidate map, passed through a 1x1
    convolution and concatenated with the candidate; strided blocks without
    normalisation then emit one raw score per patch, shape (N, 1, rows, cols).
    """

    def __init__(self, config: DiscriminatorConfig, rng, init="normal", dtype=np.float32):
        super().__init__()
        self.config = config.validate()
        self.condition_in = Conv2d(config.condition_channels, config.num_classes, 1, rng, init=init, dtype=dtype)
        self.blocks = ModuleList()
        in_channels = 2 * config.num_classes
        for width, k, s, p in zip(config.block_widths(), config.kernels, config.strides, config.paddings):
            self.blocks.append(Conv2d(in_channels, width, k, rng, stride=s, padding=p, init=init, dtype=dtype))
            in_channels = width

    def forward(self, candidate, condition):
        size = candidate.shape[-2:]
        if condition.shape[-2:] != size:
            condition = bilinear_upsample(condition, size)
        slope = self.config.leaky_slope
        x = concat([candidate, leaky_relu(self.condition_in(condition), slope)], axis=1)
        last = len(self.blocks) - 1
        for index, block in enumerate(self.blocks):
            x = block(x)
            if index < last:
                x = leaky_relu(x, slope)
        return x

    def critic(self, condition):
        """Bind the condition, giving a single-argument scorer for the WGAN losses."""
        return lambda candidate: self.forward(candidate, condition)


def build_discriminator(config: DiscriminatorConfig, rng, init="normal", dtype=np.float32):
    return Discriminator(config, rng, init, dtype)
