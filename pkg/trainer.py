"""Training loops for the four methods, top-1 evaluation and the seeded
multi-trial experiment protocol."""

import dataclasses
import json
import logging
import numbers
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

import nn
import settings
import transition
from dataset import LabeledDataset, fingerprint, split
from losses import LossError, LossOutput, cross_entropy, forward_corrected_loss, \
    reweighted_loss, revision_loss
from transition import RevisionDelta, TransitionError, TransitionMatrix

logger = logging.getLogger(__name__)

METHODS = ("baseline", "forward", "reweight", "revision")
T_SOURCE_KINDS = ("known", "provided", "estimate")

# Offsets that keep the shuffling and probe streams apart from the init stream.
SHUFFLE_SEED_OFFSET = 1
REVISION_SHUFFLE_OFFSET = 2
PROBE_SEED_OFFSET = 1_000_003

EVAL_CHUNK = 4096


class TrainingError(RuntimeError):
    """Inconsistent training request (method without T, empty split, ...)."""


def _require(value, kind, name: str):
    if isinstance(value, bool) or not isinstance(value, kind):
        raise ValueError(f"{name} must be {'an integer' if kind is numbers.Integral else 'a number'}, "
                         f"got {value!r}")


def _reject_unknown(cls, data: dict, what: str):
    unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise ValueError(f"unknown {what} keys: {sorted(unknown)}")


@dataclass
class TSource:
    """Where a trial's transition matrix comes from."""

    kind: str = "known"
    name: Optional[str] = None
    matrix: Optional[List[List[float]]] = None
    top_k: int = 1

    def __post_init__(self):
        _require(self.top_k, numbers.Integral, "t_source.top_k")
        if self.name is not None and not isinstance(self.name, str):
            raise ValueError(f"t_source.name must be a string, got {self.name!r}")
        if self.kind not in T_SOURCE_KINDS:
            raise ValueError(f"t_source must be one of {T_SOURCE_KINDS}, got {self.kind!r}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TSource":
        if not isinstance(data, dict):
            raise ValueError(f"t_source must be an object, got {data!r}")
        _reject_unknown(cls, data, "t_source")
        return cls(**data)


@dataclass
class TrainConfig:
    method: str = "baseline"
    epochs: int = 10
    lr: float = 0.001
    momentum: float = 0.9
    batch_size: int = 64
    hidden_dims: List[int] = field(default_factory=lambda: [128, 64])
    seed: int = 0
    t_source: TSource = field(default_factory=TSource)
    trials: int = 10
    split_fraction: float = 0.8
    revision_epochs: int = 10

    def __post_init__(self):
        if not isinstance(self.t_source, TSource):
            self.t_source = TSource.from_dict(self.t_source)
        for name in ("epochs", "batch_size", "seed", "trials", "revision_epochs"):
            _require(getattr(self, name), numbers.Integral, name)
        for name in ("lr", "momentum", "split_fraction"):
            _require(getattr(self, name), numbers.Real, name)
        if not isinstance(self.hidden_dims, (list, tuple)):
            raise ValueError(f"hidden_dims must be a list of integers, got {self.hidden_dims!r}")
        for h in self.hidden_dims:
            _require(h, numbers.Integral, "hidden_dims entries")
        self.hidden_dims = [int(h) for h in self.hidden_dims]
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.epochs < 0 or self.revision_epochs < 0:
            raise ValueError("epochs and revision_epochs must be >= 0")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"hidden layer sizes must be >= 1, got {self.hidden_dims}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not 0 < self.split_fraction < 1:
            raise ValueError(f"split_fraction must lie in (0, 1), got {self.split_fraction}")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["t_source"] = self.t_source.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        _reject_unknown(cls, data, "config")
        return cls(**data)


@dataclass
class TrialResult:
    trial_index: int
    seed_used: int
    method: str
    test_accuracy: Optional[float] = None
    best_validation_loss: Optional[float] = None
    best_epoch: Optional[int] = None
    estimated_T: Optional[List[List[float]]] = None
    estimation_error: Optional[float] = None
    learned_dT: Optional[List[List[float]]] = None
    epoch_history: List[dict] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        for key in ("estimated_T", "learned_dT"):
            if data[key] is not None:
                data[key] = {"size": len(data[key]), "rows": data[key]}
        return data


@dataclass
class ExperimentReport:
    method: str
    trials: List[TrialResult]
    mean_accuracy: Optional[float]
    std_accuracy: Optional[float]
    failed_trials: int
    config: dict
    datasets: dict
    metadata: dict = field(default_factory=dict)

    def accuracies(self) -> List[float]:
        return [t.test_accuracy for t in self.trials if not t.failed]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "trials": [t.to_dict() for t in self.trials],
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "failed_trials": self.failed_trials,
            "config": self.config,
            "datasets": self.datasets,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"trial": t.trial_index, "method": self.method, "accuracy": t.test_accuracy}
             for t in self.trials],
            columns=["trial", "method", "accuracy"],
        )


@dataclass
class ComparisonReport:
    reports: Dict[str, ExperimentReport]

    def summary(self) -> List[dict]:
        return [
            {"method": m, "mean_accuracy": r.mean_accuracy, "std_accuracy": r.std_accuracy,
             "trials": len(r.trials), "failed_trials": r.failed_trials}
            for m, r in self.reports.items()
        ]

    @property
    def failed_trials(self) -> int:
        return sum(r.failed_trials for r in self.reports.values())

    def to_dict(self) -> dict:
        return {
            "summary": self.summary(),
            "reports": {m: r.to_dict() for m, r in self.reports.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def to_frame(self) -> pd.DataFrame:
        return pd.concat([r.to_frame() for r in self.reports.values()], ignore_index=True)


# ---- Objectives ----

Objective = Callable[[np.ndarray, np.ndarray, Optional[np.ndarray]], LossOutput]


def _objective(method: str, T: Optional[TransitionMatrix]) -> Objective:
    if method == "baseline":
        return lambda logits, labels, delta=None: cross_entropy(logits, labels)
    if T is None:
        raise TrainingError(f"method {method!r} needs a transition matrix")
    if method == "forward":
        return lambda logits, labels, delta=None: forward_corrected_loss(logits, labels, T)
    if method == "reweight":
        return lambda logits, labels, delta=None: reweighted_loss(logits, labels, T)
    if method == "revision":
        return lambda logits, labels, delta: revision_loss(logits, labels, T, RevisionDelta(delta))
    raise TrainingError(f"unknown method {method!r}")


def _dims(ds: LabeledDataset, cfg: TrainConfig) -> List[int]:
    return [ds.dim] + list(cfg.hidden_dims) + [ds.num_classes]


def evaluate_loss(params: nn.MlpParams, ds: LabeledDataset, objective: Objective,
                  delta: Optional[np.ndarray] = None) -> float:
    """Mean objective over ds, accumulated chunk by chunk."""
    total = 0.0
    for start in range(0, ds.n, EVAL_CHUNK):
        stop = min(start + EVAL_CHUNK, ds.n)
        logits, _ = nn.forward(params, ds.features[start:stop])
        total += objective(logits, ds.labels[start:stop], delta).value * (stop - start)
    return total / ds.n


def _fit(params: nn.MlpParams, train: LabeledDataset, val: Optional[LabeledDataset],
         objective: Objective, epochs: int, cfg: TrainConfig, shuffle_seed: int,
         delta: Optional[np.ndarray] = None, label: str = "") -> tuple:
    """Mini-batch SGD for `epochs` passes.

    With a validation set, returns the snapshot (params, delta) with the lowest
    validation objective, the epoch-0 state included. Without one, returns the
    final state. `params` and `delta` are updated in place.
    """
    state = nn.OptimizerState.for_params(params, cfg.lr, cfg.momentum)
    rng = settings.make_rng(shuffle_seed)
    history = []
    best_loss = evaluate_loss(params, val, objective, delta) if val is not None else None
    best = (params.copy(), None if delta is None else delta.copy(), 0)
    history.append({"epoch": 0, "train_loss": None, "val_loss": best_loss})

    for epoch in range(1, epochs + 1):
        order = rng.permutation(train.n)
        running = 0.0
        for start in range(0, train.n, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            logits, cache = nn.forward(params, train.features[rows])
            out = objective(logits, train.labels[rows], delta)
            grads = nn.backward(params, cache, out.d_logits)
            nn.sgd_step(params, state, grads)
            if delta is not None:
                stepped = delta - cfg.lr * out.d_delta_t
                if not np.all(np.isfinite(stepped)):
                    raise nn.NumericalError("non-finite revision delta update")
                delta[...] = stepped
            running += out.value * len(rows)
        train_loss = running / train.n
        val_loss = evaluate_loss(params, val, objective, delta) if val is not None else None
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        logger.debug("%s epoch %d: train %.6f val %s", label, epoch, train_loss,
                     "-" if val_loss is None else f"{val_loss:.6f}")
        if val is None or val_loss < best_loss:
            best_loss = val_loss
            best = (params.copy(), None if delta is None else delta.copy(), epoch)

    best_params, best_delta, best_epoch = best
    return best_params, best_delta, best_loss, best_epoch, history


def _check_pair(train: LabeledDataset, val: LabeledDataset):
    if train is None or val is None or train.n == 0 or val.n == 0:
        raise TrainingError("training and validation sets must both be non-empty")
    if train.dim != val.dim or train.num_classes != val.num_classes:
        raise TrainingError(
            f"train (d={train.dim}, C={train.num_classes}) and validation "
            f"(d={val.dim}, C={val.num_classes}) do not match"
        )


# ---- Public training API ----

def train_once(train: LabeledDataset, val: LabeledDataset, cfg: TrainConfig,
               T: Optional[TransitionMatrix] = None,
               init_params: Optional[nn.MlpParams] = None) -> Tuple[nn.MlpParams, TrialResult]:
    """Train with cfg.method's loss; keep the snapshot with the lowest validation loss."""
    _check_pair(train, val)
    method = cfg.method
    if method == "revision":
        raise TrainingError("T-Revision runs through train_revision")
    if method != "baseline" and T is not None and T.size != train.num_classes:
        raise TrainingError(f"transition matrix is {T.size}x{T.size}, data has {train.num_classes} classes")
    objective = _objective(method, T)
    params = init_params.copy() if init_params is not None else nn.init(_dims(train, cfg), cfg.seed)
    if params.dims != _dims(train, cfg):
        raise TrainingError(f"initial parameters have dims {params.dims}, expected {_dims(train, cfg)}")
    best, _, best_loss, best_epoch, history = _fit(
        params, train, val, objective, cfg.epochs, cfg,
        shuffle_seed=cfg.seed + SHUFFLE_SEED_OFFSET, label=method,
    )
    result = TrialResult(
        trial_index=0, seed_used=cfg.seed, method=cfg.method,
        best_validation_loss=best_loss, best_epoch=best_epoch, epoch_history=history,
    )
    return best, result


def train_revision(train: LabeledDataset, val: LabeledDataset, cfg: TrainConfig,
                   T_init: TransitionMatrix,
                   warm_start: Optional[nn.MlpParams] = None) -> Tuple[nn.MlpParams, np.ndarray, TrialResult]:
    """Two stages: reweighted training with T_init fixed, then joint training of
    the network and a slack delta (initialised to zero) on the revision loss."""
    if T_init is None:
        raise TrainingError("T-Revision needs an initial transition matrix")
    stage1_params, stage1 = train_once(train, val, cfg.replace(method="reweight"), T_init,
                                       init_params=warm_start)
    objective = _objective("revision", T_init)
    delta = np.zeros((T_init.size, T_init.size))
    best, best_delta, best_loss, best_epoch, history = _fit(
        stage1_params.copy(), train, val, objective, cfg.revision_epochs, cfg,
        shuffle_seed=cfg.seed + REVISION_SHUFFLE_OFFSET, delta=delta, label="revision",
    )
    result = TrialResult(
        trial_index=0, seed_used=cfg.seed, method="revision",
        best_validation_loss=best_loss, best_epoch=best_epoch,
        learned_dT=best_delta.tolist(),
        epoch_history=stage1.epoch_history + [dict(h, stage="revision") for h in history],
    )
    return best, best_delta, result


def evaluate_top1(model: nn.MlpParams, test: LabeledDataset) -> float:
    """Fraction of rows whose most probable class is the label (ties go to the lower index)."""
    if model.input_dim != test.dim:
        raise nn.ShapeError(f"model expects {model.input_dim} features, test set has {test.dim}")
    if model.output_dim != test.num_classes:
        raise nn.ShapeError(f"model has {model.output_dim} outputs, test set has {test.num_classes} classes")
    correct = 0
    for start in range(0, test.n, EVAL_CHUNK):
        probs = nn.predict_proba(model, test.features[start:start + EVAL_CHUNK])
        correct += int(np.sum(np.argmax(probs, axis=1) == test.labels[start:start + EVAL_CHUNK]))
    return correct / test.n


# ---- Experiment protocol ----

def resolve_known(cfg: TrainConfig, num_classes: int,
                  T_true: Optional[TransitionMatrix] = None) -> Optional[TransitionMatrix]:
    """T for the known/provided sources; None for baseline or estimate."""
    if cfg.method == "baseline":
        return None
    source = cfg.t_source
    if source.kind == "known":
        if not source.name:
            raise TrainingError(f"method {cfg.method!r} with t_source 'known' needs a matrix name")
        return transition.known(source.name, size=num_classes)
    if source.kind == "provided":
        if source.matrix is not None:
            T = transition.make(source.matrix)
        elif T_true is not None:
            T = T_true
        else:
            raise TrainingError("t_source 'provided' needs a matrix")
        if T.size != num_classes:
            raise TrainingError(f"provided matrix is {T.size}x{T.size}, data has {num_classes} classes")
        return T
    return None


def _run_trial(k: int, pool: LabeledDataset, test: LabeledDataset,
               T_true: Optional[TransitionMatrix], cfg: TrainConfig,
               fixed_T: Optional[TransitionMatrix]) -> TrialResult:
    seed_k = cfg.seed + k
    trial_cfg = cfg.replace(seed=seed_k)
    estimated = None
    estimation_error = None
    try:
        pair = split(pool, cfg.split_fraction, seed_k)
        T = fixed_T
        warm = None
        if cfg.method != "baseline" and cfg.t_source.kind == "estimate":
            import estimator
            probe_cfg = trial_cfg.replace(method="baseline", seed=seed_k + PROBE_SEED_OFFSET)
            result = estimator.estimate_transition(pair.train, probe_cfg, cfg.t_source.top_k,
                                                   anchor_pool=pool)
            estimated = result.matrix
            if T_true is not None:
                estimation_error = transition.sum_average_error(T_true, estimated)
            T = transition.make(estimated)
            if cfg.method == "revision":
                warm = result.probe

        if cfg.method == "revision":
            params, _, trial = train_revision(pair.train, pair.validation, trial_cfg, T, warm_start=warm)
        else:
            params, trial = train_once(pair.train, pair.validation, trial_cfg, T)
        trial.test_accuracy = evaluate_top1(params, test)
    except (ArithmeticError, LossError, TransitionError) as e:
        logger.warning("trial %d (seed %d) failed: %s", k, seed_k, e)
        trial = TrialResult(trial_index=k, seed_used=seed_k, method=cfg.method, error=str(e))

    trial.trial_index = k
    trial.seed_used = seed_k
    trial.estimated_T = None if estimated is None else np.asarray(estimated).tolist()
    trial.estimation_error = estimation_error
    if not trial.failed:
        logger.info("%s trial %d (seed %d): accuracy %.4f", cfg.method, k, seed_k, trial.test_accuracy)
    return trial


def run_trials(pool: LabeledDataset, test: LabeledDataset, T_true: Optional[TransitionMatrix],
               cfg: TrainConfig, progress: bool = False) -> ExperimentReport:
    """cfg.trials independent trials on the (noisy) pool, each scored on the clean test set.

    Trial k uses seed cfg.seed + k for its split, initialisation and shuffling.
    """
    if cfg.trials < 1:
        raise TrainingError("trials must be >= 1")
    if test.dim != pool.dim:
        raise TrainingError(f"test set has {test.dim} features, pool has {pool.dim}")
    num_classes = max(pool.num_classes, test.num_classes)
    if pool.num_classes != num_classes:
        pool = LabeledDataset(pool.features, pool.labels, num_classes, pool.name)
    if test.num_classes != num_classes:
        test = LabeledDataset(test.features, test.labels, num_classes, test.name)
    fixed_T = resolve_known(cfg, num_classes, T_true)

    def one(k: int) -> TrialResult:
        return _run_trial(k, pool, test, T_true, cfg, fixed_T)

    threads = settings.thread_count()
    if threads > 0:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            trials = list(executor.map(one, range(cfg.trials)))
    else:
        iterator = tqdm(range(cfg.trials), desc=cfg.method, disable=not progress, leave=False)
        trials = [one(k) for k in iterator]
    trials.sort(key=lambda t: t.trial_index)

    accuracies = np.array([t.test_accuracy for t in trials if not t.failed])
    mean = float(accuracies.mean()) if accuracies.size else None
    std = float(accuracies.std()) if accuracies.size else None
    return ExperimentReport(
        method=cfg.method,
        trials=trials,
        mean_accuracy=mean,
        std_accuracy=std,
        failed_trials=len(trials) - int(accuracies.size),
        config=cfg.to_dict(),
        datasets={"pool": fingerprint(pool), "test": fingerprint(test)},
        metadata={"tool_version": settings.VERSION, "rng": settings.RNG_ALGORITHM,
                  "std": "population"},
    )


def compare_methods(pool: LabeledDataset, test: LabeledDataset, T: Optional[TransitionMatrix],
                    base_cfg: TrainConfig, progress: bool = False) -> ComparisonReport:
    """All four methods with shared seeds. Corrected methods use T unless the
    base config asks for estimation."""
    reports = {}
    for method in METHODS:
        cfg = base_cfg.replace(method=method)
        if method != "baseline" and base_cfg.t_source.kind != "estimate":
            if T is None:
                raise TrainingError("compare needs a transition matrix or t_source 'estimate'")
            cfg = cfg.replace(t_source=TSource(kind="provided", matrix=T.entries.tolist()))
        reports[method] = run_trials(pool, test, T, cfg, progress=progress)
    return ComparisonReport(reports)
