"""A small fully-connected ReLU classifier with analytic backprop, SGD with
momentum and a central-difference gradient checker. Float64 throughout."""

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from settings import make_rng

logger = logging.getLogger(__name__)

FD_STEP = 1e-5


class ShapeError(ValueError):
    """Array shapes do not line up with the network."""


class NumericalError(ArithmeticError):
    """A forward pass or update produced NaN/Inf."""

    def __init__(self, message: str, layer: Optional[int] = None):
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)
        self.layer = layer


@dataclass(eq=False)
class MlpParams:
    """layers[k] = (weight out x in, bias out); ReLU between layers, none after the last."""

    layers: List[Tuple[np.ndarray, np.ndarray]]

    @property
    def dims(self) -> List[int]:
        return [self.layers[0][0].shape[1]] + [w.shape[0] for w, _ in self.layers]

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]

    def arrays(self) -> List[np.ndarray]:
        return [a for layer in self.layers for a in layer]

    def copy(self) -> "MlpParams":
        return MlpParams([(w.copy(), b.copy()) for w, b in self.layers])


@dataclass(eq=False)
class GradientSet:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    loss_value: float = 0.0

    def arrays(self) -> List[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]


@dataclass(eq=False)
class OptimizerState:
    velocity: List[np.ndarray]
    learning_rate: float
    momentum: float

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")

    @classmethod
    def for_params(cls, params: MlpParams, learning_rate: float, momentum: float) -> "OptimizerState":
        return cls([np.zeros_like(a) for a in params.arrays()], learning_rate, momentum)


@dataclass
class ForwardCache:
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    single: bool = False


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    checked: int
    failures: int
    worst: Tuple[int, int] = (-1, -1)
    rel_errors: np.ndarray = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.failures == 0


def init(dims: Sequence[int], seed: int) -> MlpParams:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    dims = list(dims)
    if len(dims) < 2 or any(int(d) < 1 for d in dims):
        raise ShapeError(f"dims need at least two sizes, all >= 1; got {dims}")
    rng = make_rng(seed)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        layers.append((rng.uniform(-bound, bound, size=(fan_out, fan_in)), np.zeros(fan_out)))
    return MlpParams(layers)


def forward(params: MlpParams, x) -> Tuple[np.ndarray, ForwardCache]:
    """Logits for one feature vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.ndim != 2 or a.shape[1] != params.input_dim:
        raise ShapeError(f"expected input width {params.input_dim}, got shape {x.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalError("input is not finite")
    cache = ForwardCache(inputs=[], pre_activations=[], single=single)
    last = len(params.layers) - 1
    for k, (w, b) in enumerate(params.layers):
        cache.inputs.append(a)
        z = a @ w.T + b
        if not np.all(np.isfinite(z)):
            raise NumericalError("non-finite pre-activation", layer=k)
        if k < last:
            cache.pre_activations.append(z)
            a = np.maximum(z, 0.0)
        else:
            a = z
    return (a[0] if single else a), cache


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericalError("softmax input is not finite")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(params: MlpParams, x) -> np.ndarray:
    logits, _ = forward(params, x)
    return softmax(logits)


def backward(params: MlpParams, cache: ForwardCache, d_logits) -> GradientSet:
    """Gradients of a scalar loss given its gradient with respect to the logits."""
    delta = np.asarray(d_logits, dtype=np.float64)
    if cache.single:
        delta = delta[None, :]
    if delta.shape != (cache.inputs[0].shape[0], params.output_dim):
        raise ShapeError(
            f"logit gradient has shape {delta.shape}, expected "
            f"{(cache.inputs[0].shape[0], params.output_dim)}"
        )
    if len(cache.inputs) != len(params.layers):
        raise ShapeError("cache does not come from this network")
    n_layers = len(params.layers)
    d_weights = [None] * n_layers
    d_biases = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        w, _ = params.layers[k]
        d_weights[k] = delta.T @ cache.inputs[k]
        d_biases[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ w) * (cache.pre_activations[k - 1] > 0)
    return GradientSet(d_weights, d_biases)


def sgd_step(params: MlpParams, state: OptimizerState, grads: GradientSet) -> None:
    """Heavy-ball update in place: v <- m v + g; theta <- theta - lr v."""
    arrays = params.arrays()
    grad_arrays = grads.arrays()
    if len(arrays) != len(grad_arrays) or len(arrays) != len(state.velocity):
        raise ShapeError("gradient/velocity buffers do not match the parameters")
    updated = []
    for theta, v, g in zip(arrays, state.velocity, grad_arrays):
        if theta.shape != g.shape or theta.shape != v.shape:
            raise ShapeError(f"shape mismatch: param {theta.shape}, grad {g.shape}, velocity {v.shape}")
        v_new = state.momentum * v + g
        theta_new = theta - state.learning_rate * v_new
        if not (np.all(np.isfinite(v_new)) and np.all(np.isfinite(theta_new))):
            raise NumericalError("non-finite parameter update")
        updated.append((v_new, theta_new))
    # written back only once every update is known to be finite
    for (theta, v), (v_new, theta_new) in zip(zip(arrays, state.velocity), updated):
        v[...] = v_new
        theta[...] = theta_new


ArraysLike = Union[MlpParams, GradientSet, Sequence[np.ndarray]]


def _as_arrays(obj: ArraysLike) -> List[np.ndarray]:
    if isinstance(obj, (MlpParams, GradientSet)):
        return obj.arrays()
    return list(obj)


def grad_check(loss_fn: Callable[[ArraysLike], Tuple[float, ArraysLike]], params: ArraysLike,
               tolerance: float = 1e-4, h: float = FD_STEP, floor: float = 1e-8) -> GradCheckReport:
    """Compare loss_fn's analytic gradient with central differences, entry by entry.

    loss_fn(params) returns (value, gradient) where the gradient has the same
    layout as params. Relative error is |a - n| / max(|a|, |n|, floor).
    Parameters are perturbed in place and restored.
    """
    _, analytic = loss_fn(params)
    analytic = [np.array(g, dtype=np.float64) for g in _as_arrays(analytic)]
    arrays = _as_arrays(params)
    if len(analytic) != len(arrays):
        raise ShapeError("gradient layout does not match the parameters")
    errors = []
    worst, worst_err = (-1, -1), 0.0
    for a_idx, (theta, grad) in enumerate(zip(arrays, analytic)):
        if grad.shape != theta.shape:
            raise ShapeError(f"gradient {a_idx} has shape {grad.shape}, expected {theta.shape}")
        flat = theta.reshape(-1)
        g_flat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus, _ = loss_fn(params)
            flat[i] = original - h
            minus, _ = loss_fn(params)
            flat[i] = original
            numeric = (plus - minus) / (2.0 * h)
            err = abs(g_flat[i] - numeric) / max(abs(g_flat[i]), abs(numeric), floor)
            errors.append(err)
            if err > worst_err:
                worst, worst_err = (a_idx, i), err
    rel = np.array(errors)
    report = GradCheckReport(
        max_rel_error=float(rel.max()) if rel.size else 0.0,
        tolerance=tolerance,
        checked=int(rel.size),
        failures=int(np.sum(rel >= tolerance)),
        worst=worst,
        rel_errors=rel,
    )
    logger.debug("grad check: %d entries, max rel error %.3g", report.checked, report.max_rel_error)
    return report


# ---- Checkpoints ----

def to_checkpoint(params: MlpParams) -> dict:
    return {
        "dims": params.dims,
        "activation": "relu",
        "layers": [{"weight": w.tolist(), "bias": b.tolist()} for w, b in params.layers],
    }


def from_checkpoint(payload: dict) -> MlpParams:
    try:
        layers = [(np.array(l["weight"], dtype=np.float64), np.array(l["bias"], dtype=np.float64))
                  for l in payload["layers"]]
        dims = list(payload["dims"])
    except (KeyError, TypeError) as e:
        raise ShapeError(f"malformed checkpoint: {e!r}")
    params = MlpParams(layers)
    if params.dims != dims:
        raise ShapeError(f"checkpoint dims {dims} do not match layer shapes {params.dims}")
    for k, (w, b) in enumerate(layers):
        if b.shape != (w.shape[0],) or (k > 0 and w.shape[1] != layers[k - 1][0].shape[0]):
            raise ShapeError(f"layer {k} shapes do not chain: weight {w.shape}, bias {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NumericalError("checkpoint has non-finite parameters", layer=k)
    return params


def save_checkpoint(params: MlpParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_checkpoint(params), fh, sort_keys=True)


def load_checkpoint(path) -> MlpParams:
    with open(path, "r", encoding="utf-8") as fh:
        return from_checkpoint(json.load(fh))
