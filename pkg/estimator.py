"""Anchor-point estimation of the transition matrix.

A probe network learns the noisy posterior P(noisy label | x). For each class
i the rows with the highest probe probability for i are taken as anchor
points; at a true anchor the noisy posterior equals row i of T.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

import nn
import trainer
from dataset import LabeledDataset
from transition import SINGULAR_TOL

logger = logging.getLogger(__name__)

@dataclass(eq=False)
class AnchorSet:
    """rows[i] / posteriors[i]: the top_k anchor candidates for class i, best first."""

    rows: List[np.ndarray]
    posteriors: List[np.ndarray]
    top_k: int

    @property
    def num_classes(self) -> int:
        return len(self.rows)

    def candidates(self, i: int) -> list:
        return list(zip(self.rows[i].tolist(), self.posteriors[i]))


@dataclass
class EstimateReport:
    max_row_sum_error: float
    determinant: float
    near_singular: bool
    diagonal_dominant: bool

    def to_dict(self) -> dict:
        return {
            "max_row_sum_error": self.max_row_sum_error,
            "determinant": self.determinant,
            "near_singular": self.near_singular,
            "diagonal_dominant": self.diagonal_dominant,
        }


@dataclass(eq=False)
class EstimationResult:
    probe: nn.MlpParams
    anchors: AnchorSet
    matrix: np.ndarray
    report: EstimateReport
    probe_seed: int
    top_k: int


def fit_noisy_posterior(ds_noisy: LabeledDataset, cfg: "trainer.TrainConfig") -> nn.MlpParams:
    """Probe trained with plain cross-entropy on the noisy labels for cfg.epochs."""
    probe = nn.init([ds_noisy.dim] + list(cfg.hidden_dims) + [ds_noisy.num_classes], cfg.seed)
    objective = trainer._objective("baseline", None)
    probe, _, _, _, _ = trainer._fit(
        probe, ds_noisy, None, objective, cfg.epochs, cfg,
        shuffle_seed=cfg.seed + trainer.SHUFFLE_SEED_OFFSET, label="probe",
    )
    return probe


def pick_anchors(probe: nn.MlpParams, ds_noisy: LabeledDataset, top_k: int = 1) -> AnchorSet:
    """For each class, the top_k rows of the whole dataset ranked by probe
    probability of that class. Ties go to the lower row index.
    """
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    if ds_noisy.n < top_k:
        raise ValueError(f"dataset has {ds_noisy.n} rows, fewer than top_k={top_k}")
    probs = np.vstack([
        nn.predict_proba(probe, ds_noisy.features[start:start + trainer.EVAL_CHUNK])
        for start in range(0, ds_noisy.n, trainer.EVAL_CHUNK)
    ])
    index = np.arange(ds_noisy.n)
    rows, posteriors = [], []
    for i in range(probs.shape[1]):
        order = np.lexsort((index, -probs[:, i]))[:top_k]
        rows.append(order)
        posteriors.append(probs[order])
    return AnchorSet(rows=rows, posteriors=posteriors, top_k=top_k)


def estimate_T(anchors: AnchorSet):
    """Row i of the estimate is the mean posterior of class i's anchors.

    Returns (matrix, EstimateReport); degenerate estimates are reported, not raised.
    """
    matrix = np.vstack([p.mean(axis=0) for p in anchors.posteriors])
    det = float(np.linalg.det(matrix))
    report = EstimateReport(
        max_row_sum_error=float(np.max(np.abs(matrix.sum(axis=1) - 1.0))),
        determinant=det,
        near_singular=abs(det) < SINGULAR_TOL,
        diagonal_dominant=bool(np.all(np.argmax(matrix, axis=1) == np.arange(matrix.shape[0]))),
    )
    if report.near_singular:
        logger.warning("estimated transition matrix is near-singular (det %.3g)", det)
    return matrix, report


def estimate_transition(ds_noisy: LabeledDataset, cfg: "trainer.TrainConfig", top_k: int = 1,
                        anchor_pool: Optional[LabeledDataset] = None) -> EstimationResult:
    """Probe on ds_noisy, anchors from anchor_pool (defaults to ds_noisy), then T-hat."""
    probe = fit_noisy_posterior(ds_noisy, cfg)
    pool = anchor_pool if anchor_pool is not None else ds_noisy
    anchors = pick_anchors(probe, pool, top_k)
    matrix, report = estimate_T(anchors)
    logger.info("estimated T (top_k=%d, probe seed %d): diagonal %s", top_k, cfg.seed,
                np.round(np.diag(matrix), 4).tolist())
    return EstimationResult(probe=probe, anchors=anchors, matrix=matrix, report=report,
                            probe_seed=cfg.seed, top_k=top_k)
