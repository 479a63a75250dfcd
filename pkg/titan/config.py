# titan/config.py

from dataclasses import dataclass, replace
from typing import Tuple

from config import Config
from exceptions import ConfigurationError
from labels import DESK, ClassSubset
from utils import dataclass_from_dict, dataclass_to_file, read_key_value_file

GUIDING_LOSSES = ("lovasz", "mse", "none")


def _check(errors):
    if errors:
        raise ConfigurationError("invalid configuration: " + "; ".join(errors))


@dataclass(frozen=True)
class GeneratorConfig:
    """
    Generator hyperparameters.

    ``class_ids`` are the shared ids of the output channels (channel 0 is Unlabeled);
    the LiDAR condition uses the same channel layout.
    """

    class_ids: Tuple[int, ...] = DESK.ids
    range_channels: int = 5
    base_width: int = 32
    num_stages: int = 3
    input_height: int = 64
    input_width: int = 128
    output_height: int = 64
    output_width: int = 128
    dropout: float = 0.2
    leaky_slope: float = 0.1
    use_range_view: bool = True
    use_segmap: bool = True

    @property
    def num_classes(self):
        return len(self.class_ids)

    @property
    def downsampling(self):
        return 2**self.num_stages

    def stage_widths(self):
        """Encoder output width per stage; stage i produces base_width * 2**(i+1) channels."""
        return [self.base_width * 2 ** (i + 1) for i in range(self.num_stages)]

    def validate(self):
        errors = []
        if self.num_classes < 2:
            errors.append("at least two classes are required")
        if self.base_width < 2 or self.base_width % 2:
            errors.append(f"base_width must be an even number >= 2, got {self.base_width}")
        if self.num_stages < 1:
            errors.append("num_stages must be >= 1")
        step = self.downsampling
        if self.input_height % step or self.input_width % step:
            errors.append(
                f"input {self.input_height}x{self.input_width} must be divisible by 2**num_stages = {step}"
            )
        if self.output_height < self.input_height or self.output_width < self.input_width:
            errors.append("output size must not be smaller than the input size (bilinear head upsamples)")
        if not 0.0 <= self.dropout < 1.0:
            errors.append(f"dropout must be in [0, 1), got {self.dropout}")
        if not (self.use_range_view or self.use_segmap):
            errors.append("at least one of use_range_view and use_segmap must be enabled")
        _check(errors)
        return self


@dataclass(frozen=True)
class DiscriminatorConfig:
    """Patch critic: six strided blocks, widths doubling from ``base_width`` up to 8x."""

    num_classes: int = len(DESK.ids)
    condition_channels: int = len(DESK.ids)
    base_width: int = 32
    kernels: Tuple[int, ...] = (4, 4, 4, 4, 4, 3)
    strides: Tuple[int, ...] = (2, 2, 2, 2, 2, 1)
    paddings: Tuple[int, ...] = (1, 1, 1, 1, 1, 1)
    leaky_slope: float = 0.2

    @property
    def num_blocks(self):
        return len(self.kernels)

    def block_widths(self):
        widths = [self.base_width * 2 ** min(i, 3) for i in range(self.num_blocks - 1)]
        return widths + [1]

    def patch_grid(self, height, width):
        """Output grid (rows, cols) for a candidate of ``height`` x ``width``."""
        for k, s, p in zip(self.kernels, self.strides, self.paddings):
            height = (height + 2 * p - k) // s + 1
            width = (width + 2 * p - k) // s + 1
        return height, width

    def validate(self, height=None, width=None):
        errors = []
        if not len(self.kernels) == len(self.strides) == len(self.paddings):
            errors.append("kernels, strides and paddings must have the same length")
        if self.base_width < 1:
            errors.append("base_width must be >= 1")
        if height is not None and width is not None:
            rows, cols = self.patch_grid(height, width)
            if rows < 1 or cols < 1:
                errors.append(f"a {height}x{width} candidate leaves an empty patch grid ({rows}x{cols})")
        _check(errors)
        return self


@dataclass(frozen=True)
class TrainConfig:
    """
    Everything a training run needs; read from a plain ``key=value`` file.

    Model hyperparameters ride along so one file reproduces a run.
    """

    seed: int = 0
    max_steps: int = 2000
    batch_size: int = 10
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    gp_weight: float = 10.0
    n_critic: int = 1
    dropout: float = 0.2
    flip_prob: float = 0.5
    drop_prob: float = 0.5
    max_drop_fraction: float = 0.1
    guiding_loss: str = "lovasz"
    classes: str = "desk"
    base_width: int = 32
    num_stages: int = 3
    disc_base_width: int = 32
    init: str = "normal"
    use_range_view: bool = True
    use_segmap: bool = True
    log_every: int = 50
    dtype: str = Config.DTYPE

    def validate(self):
        errors = []
        if self.batch_size < 1:
            errors.append("batch_size must be >= 1")
        if self.max_steps < 0:
            errors.append("max_steps must be >= 0")
        if self.n_critic < 1:
            errors.append("n_critic must be >= 1")
        for name in ("flip_prob", "drop_prob", "max_drop_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                errors.append(f"{name} must be in [0, 1], got {value}")
        if not 0.0 <= self.dropout < 1.0:
            errors.append(f"dropout must be in [0, 1), got {self.dropout}")
        if self.gp_weight < 0:
            errors.append("gp_weight must be >= 0")
        if self.guiding_loss not in GUIDING_LOSSES:
            errors.append(f"guiding_loss must be one of {GUIDING_LOSSES}, got '{self.guiding_loss}'")
        if self.dtype not in ("float32", "float64"):
            errors.append(f"dtype must be float32 or float64, got '{self.dtype}'")
        _check(errors)
        ClassSubset.by_name(self.classes)
        return self

    @property
    def subset(self):
        return ClassSubset.by_name(self.classes)

    def generator_config(self, input_size, output_size):
        return GeneratorConfig(
            class_ids=self.subset.ids,
            base_width=self.base_width,
            num_stages=self.num_stages,
            input_height=input_size[0],
            input_width=input_size[1],
            output_height=output_size[0],
            output_width=output_size[1],
            dropout=self.dropout,
            use_range_view=self.use_range_view,
            use_segmap=self.use_segmap,
        ).validate()

    def discriminator_config(self):
        channels = self.subset.num_channels
        return DiscriminatorConfig(
            num_classes=channels, condition_channels=channels, base_width=self.disc_base_width
        ).validate()

    def with_overrides(self, **overrides):
        return replace(self, **{k: v for k, v in overrides.items() if v is not None}).validate()

    @classmethod
    def from_dict(cls, values):
        return dataclass_from_dict(cls, values).validate()

    @classmethod
    def from_file(cls, path):
        return cls.from_dict(read_key_value_file(path))

    def to_file(self, path):
        dataclass_to_file(path, self)
