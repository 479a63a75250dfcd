# config.py

import os

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Config:
    # Reproducibility
    SEED_OVERRIDE = os.getenv("TITAN_SEED")

    # Run registry
    DB_FILE = os.getenv("TITAN_DB_FILE", "titan_runs.db")

    # Logging
    LOG_DIR = os.getenv("TITAN_LOG_DIR", "")
    LOG_LEVEL = os.getenv("TITAN_LOG_LEVEL", "INFO")

    # Numerics
    DTYPE = os.getenv("TITAN_DTYPE", "float32")

    # Label mapping table shipped with the package
    LABEL_MAPPING_FILE = os.getenv(
        "TITAN_LABEL_MAPPING",
        os.path.join(os.path.dirname(os.path.abspath(__file__)), "data", "label_mapping.txt"),
    )

    @classmethod
    def get_db_url(cls):
        return f"sqlite:///{cls.DB_FILE}"

    @classmethod
    def get_log_file(cls, name, timestamp):
        if not cls.LOG_DIR:
            return None
        return os.path.join(cls.LOG_DIR, f"{name}_{timestamp}.log")

    @classmethod
    def resolve_seed(cls, seed):
        """Return the env seed override when present, else ``seed``."""
        override = os.getenv("TITAN_SEED", cls.SEED_OVERRIDE)
        if override not in (None, ""):
            return int(override)
        return int(seed)

    @classmethod
    def validate(cls):
        if cls.DTYPE not in ("float32", "float64"):
            raise ValueError(f"TITAN_DTYPE must be float32 or float64, got {cls.DTYPE}")
        if cls.SEED_OVERRIDE not in (None, ""):
            try:
                int(cls.SEED_OVERRIDE)
            except ValueError:
                raise ValueError(f"TITAN_SEED must be an integer, got {cls.SEED_OVERRIDE}")


# Validate configuration on import
Config.validate()
