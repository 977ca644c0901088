"""Noise transition matrices.

Convention everywhere: T[i][j] = P(noisy label = j | true label = i), so rows
are probability distributions.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-9
SINGULAR_TOL = 1e-12

KNOWN_MATRICES = {
    "fashion05": [[0.5, 0.2, 0.3], [0.3, 0.5, 0.2], [0.2, 0.3, 0.5]],
    "fashion06": [[0.4, 0.3, 0.3], [0.3, 0.4, 0.3], [0.3, 0.3, 0.4]],
}

# Reference values for the revision arithmetic. The CIFAR-10 estimate has rows
# summing to 0.999; wrap it with TransitionMatrix.unchecked.
CIFAR10_ESTIMATE = [[0.439, 0.301, 0.259], [0.283, 0.467, 0.249], [0.278, 0.290, 0.431]]
REFERENCE_DELTAS = {
    "cifar10": [[0.0332, 0.0366, 0.0286], [0.0416, 0.0449, 0.0462], [0.0322, 0.0508, 0.0372]],
    "fashion05": [[0.0279, 0.0216, 0.0400], [0.0243, 0.0219, 0.0228], [0.0307, 0.0331, 0.0282]],
    "fashion06": [[0.0482, 0.0340, 0.0452], [0.0389, 0.0447, 0.0420], [0.0463, 0.0338, 0.0434]],
}


class TransitionError(ValueError):
    """A matrix violates the transition-matrix contract."""


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic, non-singular C x C matrix, checked on construction."""

    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", _validated(self.entries))

    @classmethod
    def unchecked(cls, entries) -> "TransitionMatrix":
        """Wrap a square array as-is, such as a rounded reference estimate."""
        arr = _square(entries)
        arr.setflags(write=False)
        matrix = object.__new__(cls)
        object.__setattr__(matrix, "entries", arr)
        return matrix

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])

    def __getitem__(self, i):
        return self.entries[i]

    def to_json(self) -> dict:
        return {"size": self.size, "rows": self.entries.tolist()}


@dataclass(frozen=True, eq=False)
class RevisionDelta:
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.float64, copy=True)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise TransitionError(f"revision delta must be square, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise TransitionError("revision delta has non-finite entries")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])

    @classmethod
    def zeros(cls, size: int) -> "RevisionDelta":
        return cls(np.zeros((size, size)))

    def to_json(self) -> dict:
        return {"size": self.size, "rows": self.entries.tolist()}


def _square(entries, what: str = "matrix") -> np.ndarray:
    if isinstance(entries, (TransitionMatrix, RevisionDelta)):
        entries = entries.entries
    arr = np.array(entries, dtype=np.float64, copy=True)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise TransitionError(f"{what} must be a non-empty square matrix, got shape {arr.shape}")
    return arr


def _validated(entries) -> np.ndarray:
    arr = _square(entries, "transition matrix")
    if not np.all(np.isfinite(arr)):
        raise TransitionError("transition matrix has non-finite entries")
    if np.any(arr < 0):
        i, j = np.argwhere(arr < 0)[0]
        raise TransitionError(f"negative entry T[{i}][{j}] = {arr[i, j]}")
    if np.any(arr > 1):
        i, j = np.argwhere(arr > 1)[0]
        raise TransitionError(f"entry T[{i}][{j}] = {arr[i, j]} exceeds 1")
    sums = arr.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if bad.size:
        raise TransitionError(f"row {bad[0]} sums to {sums[bad[0]]!r}, expected 1")
    det = float(np.linalg.det(arr))
    if abs(det) < SINGULAR_TOL:
        raise TransitionError(f"transition matrix is singular (|det| = {abs(det):.3g})")
    arr.setflags(write=False)
    return arr


def make(entries) -> TransitionMatrix:
    """Validate entries and wrap them as a TransitionMatrix."""
    return TransitionMatrix(entries)


def identity(size: int) -> TransitionMatrix:
    return make(np.eye(size))


def known(name: str, size: int = None) -> TransitionMatrix:
    """A named matrix: fashion05, fashion06, or identity (needs size)."""
    if name == "identity":
        if size is None:
            raise TransitionError("identity needs a size")
        return identity(size)
    if name not in KNOWN_MATRICES:
        raise TransitionError(
            f"unknown matrix {name!r}; choose from {sorted(KNOWN_MATRICES) + ['identity']}"
        )
    T = make(KNOWN_MATRICES[name])
    if size is not None and size != T.size:
        raise TransitionError(f"{name} is {T.size}x{T.size}, dataset needs {size}x{size}")
    return T


def symmetric(size: int, rate: float) -> TransitionMatrix:
    """Keep a label with probability 1-rate, otherwise flip uniformly to another class."""
    if size < 2 or not 0 <= rate <= 1:
        raise TransitionError(f"need size >= 2 and rate in [0, 1], got {size}, {rate}")
    P = np.full((size, size), rate / (size - 1))
    np.fill_diagonal(P, 1.0 - rate)
    return make(P)


def pair_flip(size: int, rate: float) -> TransitionMatrix:
    """Flip class i to class i+1 (mod C) with probability rate."""
    if size < 2 or not 0 <= rate <= 1:
        raise TransitionError(f"need size >= 2 and rate in [0, 1], got {size}, {rate}")
    P = (1.0 - rate) * np.eye(size)
    for i in range(size):
        P[i, (i + 1) % size] += rate
    return make(P)


def apply_to_posterior(T: TransitionMatrix, p) -> np.ndarray:
    """Noisy posterior q[i] = sum_j T[j][i] p[j]; accepts a vector or rows of vectors."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != T.size:
        raise TransitionError(f"posterior has length {p.shape[-1]}, matrix size is {T.size}")
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > ROW_SUM_TOL):
        raise TransitionError("posterior must be non-negative and sum to 1")
    return p @ T.entries


def revise(T: TransitionMatrix, dT: RevisionDelta) -> np.ndarray:
    """T + dT, deliberately left unnormalised."""
    if T.size != dT.size:
        raise TransitionError(f"size mismatch: T is {T.size}, delta is {dT.size}")
    revised = T.entries + dT.entries
    if not np.all(np.isfinite(revised)):
        raise TransitionError("revised matrix has non-finite entries")
    return revised


def sum_average_error(T_true, T_est) -> float:
    """Relative L1 distance sum|T_est - T_true| / sum|T_true|."""
    truth = _square(T_true, "true matrix")
    est = _square(T_est, "estimated matrix")
    if truth.shape != est.shape:
        raise TransitionError(f"size mismatch: {truth.shape} vs {est.shape}")
    return float(np.abs(est - truth).sum() / np.abs(truth).sum())


# ---- JSON ----

def from_json(payload: dict) -> TransitionMatrix:
    try:
        size = int(payload["size"])
        rows = payload["rows"]
    except (KeyError, TypeError, ValueError) as e:
        raise TransitionError(f"expected {{'size': C, 'rows': [...]}}, got error {e!r}")
    arr = _square(rows, "transition matrix")
    if arr.shape[0] != size:
        raise TransitionError(f"declared size {size} but found {arr.shape[0]} rows")
    return make(arr)


def save_json(matrix, path, extra: dict = None) -> None:
    """Write a matrix (validated or raw) in the {"size", "rows"} format plus metadata."""
    arr = _square(matrix)
    payload = {"size": int(arr.shape[0]), "rows": arr.tolist()}
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path) -> TransitionMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as e:
            raise TransitionError(f"{path}: not valid JSON ({e})")
    return from_json(payload)


def load_raw_json(path) -> np.ndarray:
    """Read the rows of a matrix file without stochastic validation (estimates, revisions)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as e:
            raise TransitionError(f"{path}: not valid JSON ({e})")
    if not isinstance(payload, dict) or "rows" not in payload:
        raise TransitionError(f"{path}: expected an object with a 'rows' field")
    return _square(payload["rows"])
