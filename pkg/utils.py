# utils.py

import hashlib
import os
from dataclasses import fields

import numpy as np
from dotenv import dotenv_values
from tqdm import tqdm

from config import Config
from exceptions import ConfigurationError


def philox(seed):
    """Counter-based generator for an explicit seed, ignoring any override."""
    return np.random.Generator(np.random.Philox(int(seed)))


def make_rng(seed):
    """
    Create the counter-based random stream every stochastic step draws from.

    :param seed: Integer seed; the ``TITAN_SEED`` environment override wins
    :return: numpy Generator backed by Philox
    """
    return philox(Config.resolve_seed(seed))


def spawn_rng(rng):
    """Derive an independent stream, e.g. for a concurrent worker."""
    return philox(rng.integers(0, 2**63 - 1))


def read_key_value_file(path):
    """
    Read a plain-text ``key=value`` configuration file.

    :param path: Path to the file
    :return: Dictionary of raw string values
    """
    if not os.path.exists(path):
        raise ConfigurationError(f"Config file not found: {path}")
    values = dotenv_values(path)
    return {key.strip().lower(): value for key, value in values.items() if value is not None}


def write_key_value_file(path, values):
    with open(path, "w") as f:
        for key, value in values.items():
            f.write(f"{key}={value}\n")


def sample_hash(*arrays):
    """SHA-256 over the raw bytes of the given arrays, in order."""
    digest = hashlib.sha256()
    for array in arrays:
        array = np.ascontiguousarray(array)
        digest.update(str(array.dtype).encode())
        digest.update(str(array.shape).encode())
        digest.update(array.tobytes())
    return digest.hexdigest()


def progress_bar(iterable=None, desc=None, total=None, **kwargs):
    """
    Create a progress bar for an iterable or manual updates.

    :param iterable: Iterable to wrap with progress bar
    :param desc: Description for the progress bar
    :param total: Total number of items (required if iterable is None)
    :param kwargs: Additional keyword arguments for tqdm
    :return: tqdm instance
    """
    return tqdm(
        iterable=iterable,
        desc=desc,
        total=total,
        ncols=100,
        unit="item",
        unit_scale=True,
        bar_format="{l_bar}{bar}| {n_fmt}/{total_fmt} [{elapsed}<{remaining}]",
        **kwargs,
    )


def coerce_value(raw, default):
    """Convert a raw config string to the type of ``default``."""
    if isinstance(default, bool):
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, tuple):
        return tuple((type(default[0]) if default else float)(v.strip()) for v in str(raw).split(",") if v.strip())
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return str(raw).strip()


def dataclass_from_dict(cls, values):
    """
    Build a dataclass from raw ``key=value`` strings, typed by each field's default.

    :raises ConfigurationError: on unknown keys or unparsable values
    """
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} keys: {unknown}")
    kwargs = {}
    for name, raw in values.items():
        try:
            kwargs[name] = coerce_value(raw, known[name].default)
        except ValueError:
            raise ConfigurationError(f"invalid value for {name}: {raw!r}")
    return cls(**kwargs)


def dataclass_to_file(path, instance):
    values = {}
    for f in fields(instance):
        value = getattr(instance, f.name)
        values[f.name] = ",".join(str(v) for v in value) if isinstance(value, tuple) else value
    write_key_value_file(path, values)
