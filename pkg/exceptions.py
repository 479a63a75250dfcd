# exceptions.py


class TitanError(Exception):
    """Base exception for the range-view translation pipeline."""

    def __init__(self, message):
        self.message = message
        super().__init__(self.message)


class ConfigurationError(TitanError):
    """Exception raised for errors in the configuration."""

    pass


class GeometryError(TitanError):
    """Exception raised for invalid point clouds or projection parameters."""

    pass


class LabelMappingError(TitanError):
    """Exception raised when a raw label has no shared counterpart."""

    pass


class TensorError(TitanError):
    """Exception raised for invalid differentiable tensor operations."""

    pass


class LossError(TitanError):
    """Exception raised for invalid loss inputs."""

    pass


class TrainingDivergedError(TitanError):
    """Exception raised when a training step produces a non-finite loss."""

    def __init__(self, step, losses=None):
        self.step = step
        self.losses = losses or {}
        super().__init__(f"training diverged at step {step}: {self.losses}")


class CheckpointError(TitanError):
    """Exception raised for unreadable or incompatible checkpoint files."""

    pass


class DataFormatError(TitanError):
    """Exception raised for malformed SemanticKITTI or dataset files."""

    pass


class SceneError(TitanError):
    """Exception raised when a synthetic scene cannot be generated."""

    pass


class MetricError(TitanError):
    """Exception raised for invalid metric inputs."""

    pass


class SplitLeakError(TitanError):
    """Exception raised when a sample appears in more than one dataset split."""

    def __init__(self, sample_hash, existing_split, new_split):
        self.sample_hash = sample_hash
        self.existing_split = existing_split
        self.new_split = new_split
        super().__init__(
            f"sample {sample_hash[:12]} already registered in split "
            f"'{existing_split}', refusing to add it to '{new_split}'"
        )
