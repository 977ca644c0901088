"""Runtime configuration for NoisyKit, read from the environment and `.env`."""

import os

import numpy as np
from dotenv import load_dotenv

load_dotenv()

VERSION = "0.3.0"

# Named so manifests can state which generator produced a file.
RNG_ALGORITHM = "numpy.PCG64"

DB_PATH = os.getenv("NOISYKIT_DB", "")
DEFAULT_DB_PATH = "noisykit_runs.db"
LOG_LEVEL = os.getenv("NOISYKIT_LOG_LEVEL", "INFO").upper()


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator; every stochastic operation gets its randomness here."""
    if seed < 0:
        raise ValueError(f"seed must be a non-negative 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def thread_count() -> int:
    """Trial parallelism cap from NOISYKIT_THREADS (0 or unset = sequential)."""
    raw = os.getenv("NOISYKIT_THREADS", "").strip()
    if not raw:
        return 0
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"NOISYKIT_THREADS must be an integer, got {raw!r}")
    if value < 0:
        raise ValueError(f"NOISYKIT_THREADS must be >= 0, got {value}")
    return value


def registry_path(explicit: str = None) -> str:
    """Run registry location: explicit flag, then NOISYKIT_DB, else '' (disabled)."""
    if explicit:
        return explicit
    return os.getenv("NOISYKIT_DB", DB_PATH)
