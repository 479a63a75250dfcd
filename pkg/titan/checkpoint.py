# titan/checkpoint.py

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from autodiff import AdamState, load_tensors, save_tensors
from exceptions import CheckpointError, ConfigurationError

from .config import DiscriminatorConfig, GeneratorConfig
from .discriminator import Discriminator
from .generator import Generator

ADAM_FIELDS = ("lr", "beta1", "beta2", "eps", "t")


@dataclass
class Checkpoint:
    generator: Generator
    discriminator: Optional[Discriminator] = None
    adam_g: Optional[AdamState] = None
    adam_d: Optional[AdamState] = None
    step: int = 0


def _from_float32(value):
    # shortest decimal that survives the float32 round trip
    return float(f"{float(value):.7g}")


def config_to_tensors(prefix, config):
    tensors = {}
    for f in fields(config):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            tensors[f"{prefix}.{f.name}"] = np.asarray(value, dtype=np.float32)
        else:
            tensors[f"{prefix}.{f.name}"] = np.asarray(float(value), dtype=np.float32)
    return tensors


def config_from_tensors(prefix, cls, tensors):
    kwargs = {}
    for f in fields(cls):
        key = f"{prefix}.{f.name}"
        if key not in tensors:
            raise CheckpointError(f"checkpoint lacks {key}")
        value = tensors[key]
        if isinstance(f.default, tuple):
            kwargs[f.name] = tuple(int(v) for v in np.asarray(value).reshape(-1))
        elif isinstance(f.default, bool):
            kwargs[f.name] = bool(value)
        elif isinstance(f.default, int):
            kwargs[f.name] = int(round(float(value)))
        else:
            kwargs[f.name] = _from_float32(value)
    try:
        return cls(**kwargs).validate()
    except ConfigurationError as e:
        raise CheckpointError(f"checkpoint holds an invalid {prefix}: {e.message}")


def _adam_tensors(prefix, state: AdamState):
    tensors = {f"{prefix}.{name}": np.asarray(getattr(state, name), dtype=np.float32) for name in ADAM_FIELDS}
    for name in sorted(state.m):
        tensors[f"{prefix}.m.{name}"] = state.m[name]
        tensors[f"{prefix}.v.{name}"] = state.v[name]
    return tensors


def _adam_state(prefix, tensors, dtype):
    if f"{prefix}.t" not in tensors:
        return None
    state = AdamState(
        lr=_from_float32(tensors[f"{prefix}.lr"]),
        beta1=_from_float32(tensors[f"{prefix}.beta1"]),
        beta2=_from_float32(tensors[f"{prefix}.beta2"]),
        eps=_from_float32(tensors[f"{prefix}.eps"]),
        t=int(tensors[f"{prefix}.t"]),
    )
    for key, value in tensors.items():
        for moment in ("m", "v"):
            marker = f"{prefix}.{moment}."
            if key.startswith(marker):
                getattr(state, moment)[key[len(marker) :]] = value.astype(dtype)
    return state


def save_checkpoint(path, generator, discriminator=None, opt_g=None, opt_d=None, step=0):
    """
    Write models, their configs and optional Adam states to one checkpoint file.

    Every array is stored as float32, whatever the training dtype; a float64 run comes back
    rounded to float32 and then cast to the ``dtype`` given to ``load_checkpoint``.

    :param opt_g: Adam or AdamState of the generator, optional
    :param opt_d: Adam or AdamState of the discriminator, optional
    """
    tensors = {"meta.step": np.asarray(step, dtype=np.float32)}
    tensors.update(config_to_tensors("config.generator", generator.config))
    tensors.update({f"generator.{k}": v for k, v in sorted(generator.state_dict().items())})
    if discriminator is not None:
        tensors.update(config_to_tensors("config.discriminator", discriminator.config))
        tensors.update({f"discriminator.{k}": v for k, v in sorted(discriminator.state_dict().items())})
    for prefix, optimizer in (("adam_g", opt_g), ("adam_d", opt_d)):
        if optimizer is not None:
            state = getattr(optimizer, "state", optimizer)
            tensors.update(_adam_tensors(prefix, state))
    save_tensors(path, tensors)


def _section(tensors, prefix):
    marker = prefix + "."
    return {k[len(marker) :]: v for k, v in tensors.items() if k.startswith(marker)}


def load_checkpoint(path, dtype=np.float32) -> Checkpoint:
    """Rebuild models (and optimizer states when present) from a checkpoint file."""
    tensors = load_tensors(path)
    generator_config = config_from_tensors("config.generator", GeneratorConfig, tensors)
    generator = Generator(generator_config, rng=None, init="zeros", dtype=dtype)
    try:
        generator.load_state_dict(_section(tensors, "generator"))
        discriminator = None
        if "config.discriminator.base_width" in tensors:
            discriminator_config = config_from_tensors("config.discriminator", DiscriminatorConfig, tensors)
            discriminator = Discriminator(discriminator_config, rng=None, init="zeros", dtype=dtype)
            discriminator.load_state_dict(_section(tensors, "discriminator"))
    except ConfigurationError as e:
        raise CheckpointError(f"checkpoint does not match its model config: {e.message}")
    generator.eval()
    if discriminator is not None:
        discriminator.eval()
    return Checkpoint(
        generator=generator,
        discriminator=discriminator,
        adam_g=_adam_state("adam_g", tensors, dtype),
        adam_d=_adam_state("adam_d", tensors, dtype),
        step=int(tensors.get("meta.step", 0)),
    )
