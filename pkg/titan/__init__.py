from .augment import augment, drop_points, flip_y
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import DiscriminatorConfig, GeneratorConfig, TrainConfig
from .discriminator import Discriminator, build_discriminator
from .generator import Generator, build_generator
from .trainer import Batch, Trainer, build_models, train_step
