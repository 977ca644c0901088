"""Labelled datasets: CSV I/O, synthetic Gaussian classes, normalisation,
class-conditional label noise and train/validation splits."""

import hashlib
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from settings import make_rng
from transition import TransitionMatrix

logger = logging.getLogger(__name__)

_INT_RE = re.compile(r"^\s*[+-]?\d+\s*$")


class DatasetError(ValueError):
    """Invalid dataset contents or CSV format."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64, copy=True)
        labels = np.array(self.labels, copy=True)
        if features.ndim != 2:
            raise DatasetError(f"features must be a 2-D matrix, got shape {features.shape}")
        if labels.ndim != 1:
            raise DatasetError(f"labels must be a vector, got shape {labels.shape}")
        if labels.size == 0:
            raise DatasetError("dataset must contain at least one row")
        if features.shape[0] != labels.shape[0]:
            raise DatasetError(
                f"features have {features.shape[0]} rows but there are {labels.shape[0]} labels"
            )
        if labels.dtype.kind not in "iu":
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise DatasetError("labels must be integers")
        labels = labels.astype(np.int64)
        if self.num_classes < 2:
            raise DatasetError(f"num_classes must be >= 2, got {self.num_classes}")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise DatasetError(
                f"labels must lie in [0, {self.num_classes}), got range "
                f"[{labels.min()}, {labels.max()}]"
            )
        if not np.all(np.isfinite(features)):
            raise DatasetError("features contain NaN or infinite values")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "num_classes", int(self.num_classes))

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, rows: np.ndarray, name: str = None) -> "LabeledDataset":
        return LabeledDataset(self.features[rows], self.labels[rows], self.num_classes,
                              name or self.name)

    def with_labels(self, labels: np.ndarray, name: str = None) -> "LabeledDataset":
        return LabeledDataset(self.features, labels, self.num_classes, name or self.name)


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int
    dim: int
    samples_per_class: int
    class_separation: float
    noise_sigma: float
    seed: int

    def __post_init__(self):
        if self.num_classes < 2:
            raise DatasetError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.dim < 1:
            raise DatasetError(f"dim must be >= 1, got {self.dim}")
        if self.samples_per_class < 1:
            raise DatasetError(f"samples_per_class must be >= 1, got {self.samples_per_class}")
        if not self.class_separation > 0:
            raise DatasetError(f"class_separation must be > 0, got {self.class_separation}")
        if not self.noise_sigma > 0:
            raise DatasetError(f"noise_sigma must be > 0, got {self.noise_sigma}")
        if self.seed < 0:
            raise DatasetError(f"seed must be non-negative, got {self.seed}")

    @property
    def total(self) -> int:
        return self.num_classes * self.samples_per_class


@dataclass(frozen=True, eq=False)
class SplitPair:
    train: LabeledDataset
    validation: LabeledDataset
    split_fraction: float
    seed: int
    train_rows: np.ndarray = field(repr=False, default=None)
    validation_rows: np.ndarray = field(repr=False, default=None)


# ---- File I/O ----

def load_csv(path) -> LabeledDataset:
    """Read a `label,f0,f1,...` CSV file. C is inferred as 1 + max(label)."""
    line_numbers = _scan_rows(path)

    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False,
                          skip_blank_lines=True, index_col=False, encoding="utf-8")
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise DatasetError(f"unparseable row ({e})", line=int(match.group(1)) if match else None)

    cells = raw.to_numpy(dtype=object)
    for r in range(cells.shape[0]):
        row = cells[r]
        line = line_numbers[r]
        if any(str(c).strip() == "" for c in row):
            raise DatasetError("empty cell", line=line)
        if not _INT_RE.match(str(row[0])):
            raise DatasetError(f"label {row[0]!r} is not an integer", line=line)

    labels = np.array([int(c) for c in cells[:, 0]], dtype=np.int64)
    negative = np.flatnonzero(labels < 0)
    if negative.size:
        r = int(negative[0])
        raise DatasetError(f"negative label {labels[r]}", line=line_numbers[r])

    try:
        features = cells[:, 1:].astype(str).astype(np.float64)
    except ValueError:
        for r in range(cells.shape[0]):
            for c in range(1, cells.shape[1]):
                try:
                    float(cells[r, c])
                except ValueError:
                    raise DatasetError(
                        f"column {raw.columns[c]!r}: {cells[r, c]!r} is not a number",
                        line=line_numbers[r],
                    )
        raise
    bad = np.argwhere(~np.isfinite(features))
    if bad.size:
        r, c = bad[0]
        raise DatasetError(f"column {raw.columns[c + 1]!r}: non-finite value",
                           line=line_numbers[r])

    num_classes = max(int(labels.max()) + 1, 2)
    ds = LabeledDataset(features, labels, num_classes, name=str(path))
    logger.debug("loaded %s: n=%d d=%d C=%d", path, ds.n, ds.dim, ds.num_classes)
    return ds


def _scan_rows(path) -> list:
    """Check the header and per-row column counts; return 1-based line numbers
    of the non-blank data rows."""
    numbers = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline()
        if not header.strip():
            raise DatasetError("file is empty, expected a header beginning with 'label'", line=1)
        columns = [c.strip() for c in header.strip().split(",")]
        if columns[0] != "label":
            raise DatasetError("header must begin with 'label'", line=1)
        if len(columns) < 2:
            raise DatasetError("expected at least one feature column", line=1)
        for i, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            fields = line.rstrip("\r\n").split(",")
            if len(fields) != len(columns):
                raise DatasetError(
                    f"expected {len(columns)} columns, found {len(fields)}", line=i
                )
            numbers.append(i)
    if not numbers:
        raise DatasetError("no data rows after header", line=2)
    return numbers


def save_csv(ds: LabeledDataset, path) -> None:
    """Write ds as CSV with 17 significant digits so parsing restores every float."""
    columns = ["label"] + [f"f{j}" for j in range(ds.dim)]
    frame = pd.DataFrame(ds.features, columns=columns[1:])
    frame.insert(0, "label", ds.labels)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n",
                 encoding="utf-8")


# ---- Generation and transforms ----

def class_means(spec: SyntheticSpec) -> np.ndarray:
    """mean_i = sep * e_(i mod d), scaled by (1 + i // d) once classes wrap past d."""
    means = np.zeros((spec.num_classes, spec.dim))
    for i in range(spec.num_classes):
        means[i, i % spec.dim] = spec.class_separation * (1 + i // spec.dim)
    return means


def synthesize(spec: SyntheticSpec) -> LabeledDataset:
    rng = make_rng(spec.seed)
    means = class_means(spec)
    m = spec.samples_per_class
    features = np.empty((spec.total, spec.dim))
    labels = np.repeat(np.arange(spec.num_classes), m)
    for i in range(spec.num_classes):
        features[i * m:(i + 1) * m] = means[i] + spec.noise_sigma * rng.standard_normal((m, spec.dim))
    return LabeledDataset(features, labels, spec.num_classes,
                          name=f"synthetic-C{spec.num_classes}-d{spec.dim}-seed{spec.seed}")


def normalize_255(ds: LabeledDataset) -> LabeledDataset:
    """Map 0-255 pixel intensities to [0, 1]."""
    low, high = float(ds.features.min()), float(ds.features.max())
    if low < 0 or high > 255:
        raise DatasetError(f"feature values must lie in [0, 255], got range [{low}, {high}]")
    return LabeledDataset(ds.features / 255.0, ds.labels, ds.num_classes, ds.name)


def inject_noise(ds: LabeledDataset, T: TransitionMatrix, seed: int) -> LabeledDataset:
    """Replace each label y by an independent draw from row y of T."""
    if T.size != ds.num_classes:
        raise DatasetError(
            f"transition matrix is {T.size}x{T.size} but dataset has {ds.num_classes} classes"
        )
    rng = make_rng(seed)
    u = rng.random(ds.n)
    cdf = np.cumsum(T.entries, axis=1)
    noisy = (u[:, None] >= cdf[ds.labels]).sum(axis=1)
    noisy = np.minimum(noisy, ds.num_classes - 1)
    logger.debug("injected noise: %.4f of labels flipped", float(np.mean(noisy != ds.labels)))
    return ds.with_labels(noisy, name=f"{ds.name}+noise")


def split(ds: LabeledDataset, fraction: float, seed: int) -> SplitPair:
    if not 0 < fraction < 1:
        raise DatasetError(f"split fraction must lie in (0, 1), got {fraction}")
    k = int(math.floor(fraction * ds.n))
    if k == 0 or k == ds.n:
        raise DatasetError(
            f"degenerate split: fraction {fraction} of {ds.n} rows leaves one side empty"
        )
    perm = make_rng(seed).permutation(ds.n)
    train_rows, val_rows = perm[:k], perm[k:]
    return SplitPair(
        train=ds.subset(train_rows, name=f"{ds.name}[train]"),
        validation=ds.subset(val_rows, name=f"{ds.name}[val]"),
        split_fraction=fraction,
        seed=seed,
        train_rows=train_rows,
        validation_rows=val_rows,
    )


# ---- Summaries ----

def class_counts(ds: LabeledDataset) -> np.ndarray:
    return np.bincount(ds.labels, minlength=ds.num_classes)


def flip_rates(clean: np.ndarray, noisy: np.ndarray, num_classes: int) -> np.ndarray:
    """Empirical P(noisy=j | clean=i); rows of absent classes are left at zero."""
    counts = np.zeros((num_classes, num_classes))
    np.add.at(counts, (np.asarray(clean), np.asarray(noisy)), 1)
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)


def fingerprint(ds: LabeledDataset) -> dict:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(ds.features).tobytes())
    digest.update(np.ascontiguousarray(ds.labels).tobytes())
    return {"n": ds.n, "d": ds.dim, "C": ds.num_classes, "sha256": digest.hexdigest()}
