# titan/trainer.py

import csv
import os
from dataclasses import dataclass

import numpy as np

from autodiff import Adam, Tensor, backward, softmax
from exceptions import TrainingDivergedError
from labels import one_hot
from logger import logger
from losses import LossReport, critic_terms, lovasz_softmax, mse_guiding_loss, total_generator_loss, wgan_g_loss
from utils import progress_bar

from .config import TrainConfig
from .discriminator import build_discriminator
from .generator import build_generator

LOSS_LOG_FIELDS = ("step", "d_loss", "g_adv", "lovasz", "gp")


@dataclass
class Batch:
    """
    One training batch in model channel space.

    range_view: (N, 5, h', w') range crops; lidar_labels: (N, h', w') and
    camera_labels: (N, H, W) channel indices of the model's class subset.
    """

    range_view: np.ndarray
    lidar_labels: np.ndarray
    camera_labels: np.ndarray

    def __len__(self):
        return len(self.range_view)


def encode_batch(batch: Batch, num_classes, dtype):
    """Model inputs for a batch: (range tensor, condition one-hot, real one-hot)."""
    range_view = Tensor(np.asarray(batch.range_view, dtype=dtype))
    condition = one_hot(batch.lidar_labels, num_classes, dtype=dtype)
    real = one_hot(batch.camera_labels, num_classes, dtype=dtype)
    return range_view, condition, real


def guiding_term(name, probs, labels):
    if name == "lovasz":
        return lovasz_softmax(probs, labels, ignore_id=0)
    if name == "mse":
        return mse_guiding_loss(probs, labels, ignore_id=0)
    return Tensor(np.zeros((), dtype=probs.dtype))


def build_models(config: TrainConfig, input_size, output_size, rng):
    """
    Fresh generator and critic for a run.

    :param input_size: (h', w') of the LiDAR crop
    :param output_size: (H, W) of the camera segment map
    :raises ConfigurationError: when the critic leaves no patch on an (H, W) map
    :return: Tuple (generator, discriminator)
    """
    dtype = np.dtype(config.dtype)
    generator = build_generator(config.generator_config(input_size, output_size), rng, config.init, dtype)
    discriminator_config = config.discriminator_config().validate(*output_size)
    return generator, build_discriminator(discriminator_config, rng, config.init, dtype)


def _finite_or_raise(step, **values):
    if all(np.isfinite(v) for v in values.values()):
        return
    logger.error(f"Non-finite loss at step {step}: {values}")
    raise TrainingDivergedError(step, values)


def train_step(generator, discriminator, batch: Batch, config: TrainConfig, rng, opt_g, opt_d, step=0):
    """
    One critic update followed by one generator update.

    :param generator: Generator in training mode
    :param discriminator: Discriminator in training mode
    :param batch: Batch of paired crops and camera labels
    :param config: Training configuration (λ, n_critic, guiding loss)
    :param rng: numpy Generator for dropout and the penalty interpolates
    :param opt_g: Adam over the generator parameters
    :param opt_d: Adam over the discriminator parameters
    :param step: Step index reported on divergence
    :return: LossReport
    """
    dtype = np.dtype(config.dtype)
    range_view, condition, real = encode_batch(batch, generator.config.num_classes, dtype)
    critic = discriminator.critic(condition)

    probs = softmax(generator(range_view, condition, rng), axis=1)
    fake = probs.detach()

    for _ in range(config.n_critic):
        wasserstein, penalty = critic_terms(critic, real, fake, config.gp_weight, rng)
        d_loss = wasserstein + penalty
        _finite_or_raise(step, d_loss=d_loss.item(), gp=penalty.item())
        opt_d.zero_grad()
        backward(d_loss)
        opt_d.step()

    g_adv = wgan_g_loss(critic, probs)
    guiding = guiding_term(config.guiding_loss, probs, batch.camera_labels)
    total = total_generator_loss(g_adv, guiding)
    _finite_or_raise(step, g_adv=g_adv.item(), guiding=guiding.item())
    opt_g.zero_grad()
    backward(total)
    opt_g.step()
    # the generator pass also left gradients on the critic
    opt_d.zero_grad()

    g_adv_value, guiding_value = g_adv.item(), guiding.item()
    return LossReport(
        d_loss=d_loss.item(),
        g_adv_loss=g_adv_value,
        lovasz_loss=guiding_value,
        gp_term=penalty.item(),
        total_g=g_adv_value + guiding_value,
    )


class Trainer:
    """Owns the optimisers and the step counter of one training run."""

    def __init__(self, generator, discriminator, config: TrainConfig, rng, loss_log=None, on_report=None):
        self.generator = generator
        self.discriminator = discriminator
        self.config = config
        self.rng = rng
        self.step = 0
        betas = (config.beta1, config.beta2)
        self.opt_g = Adam(generator.parameters(), lr=config.lr, betas=betas)
        self.opt_d = Adam(discriminator.parameters(), lr=config.lr, betas=betas)
        self.loss_log = loss_log
        self.on_report = on_report

    def train_step(self, batch: Batch):
        self.generator.train()
        self.discriminator.train()
        report = train_step(
            self.generator, self.discriminator, batch, self.config, self.rng, self.opt_g, self.opt_d, self.step
        )
        self._record(report)
        self.step += 1
        return report

    def fit(self, next_batch, steps=None, quiet=False):
        """
        Run ``steps`` training steps (default ``config.max_steps``).

        :param next_batch: Callable (rng) -> Batch
        :return: List of LossReport, one per step
        """
        steps = self.config.max_steps if steps is None else steps
        logger.info(f"Training for {steps} steps (batch {self.config.batch_size}, guiding={self.config.guiding_loss})")
        reports = []
        with progress_bar(desc="Training", total=steps, disable=quiet) as pbar:
            for _ in range(steps):
                report = self.train_step(next_batch(self.rng))
                reports.append(report)
                if self.step % self.config.log_every == 0:
                    logger.info(
                        f"step {self.step}: d={report.d_loss:.4f} g_adv={report.g_adv_loss:.4f} "
                        f"guide={report.lovasz_loss:.4f} gp={report.gp_term:.4f}"
                    )
                pbar.update(1)
        logger.info(f"Training finished at step {self.step}")
        return reports

    def _record(self, report: LossReport):
        if self.loss_log:
            write_header = not os.path.exists(self.loss_log) or os.path.getsize(self.loss_log) == 0
            with open(self.loss_log, "a", newline="") as f:
                writer = csv.writer(f)
                if write_header:
                    writer.writerow(LOSS_LOG_FIELDS)
                writer.writerow(
                    [self.step, report.d_loss, report.g_adv_loss, report.lovasz_loss, report.gp_term]
                )
        if self.on_report is not None:
            self.on_report(self.step, report)
