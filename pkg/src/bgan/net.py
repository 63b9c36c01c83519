"""Minimal dense-network engine with exact reverse-mode gradients.

A network is a point in R^P: all weights and biases live in one flat float64
vector so the samplers can treat parameters as plain vectors.  Hidden layers
use ReLU (subgradient 0 at 0); the output head is linear, sigmoid, or
softmax.  Probabilities are clamped to ``[PROB_FLOOR, 1 - PROB_FLOOR]``
before any logarithm, so saturated discriminators yield finite objectives
(and zero gradient inside the clamped region).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError, NumericError, ShapeError
from .rng import substream

PROB_FLOOR = 1e-7

HIDDEN_ACTIVATIONS = ("relu",)
OUTPUT_HEADS = ("linear", "sigmoid", "softmax")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of one fully connected network.

    ``layer_sizes`` lists every layer width including input and output,
    e.g. ``(10, 1000, 100)`` for a 10-1000-100 net.
    """

    layer_sizes: tuple
    hidden_activation: str = "relu"
    output_head: str = "linear"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ConfigurationError(f"need at least input and output layers, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ConfigurationError(f"all layer sizes must be >= 1, got {sizes}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ConfigurationError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_head not in OUTPUT_HEADS:
            raise ConfigurationError(f"unknown output head {self.output_head!r}")

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def layer_shapes(self):
        """(fan_in, fan_out) per weight layer."""
        s = self.layer_sizes
        return [(s[i], s[i + 1]) for i in range(len(s) - 1)]

    def param_count(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_shapes())


@dataclass(frozen=True)
class ParamVector:
    """Flat float64 parameter vector tied to its architecture."""

    values: np.ndarray
    spec: NetworkSpec

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.shape[0] != self.spec.param_count():
            raise ShapeError(
                f"parameter vector has {values.size} entries, "
                f"spec {self.spec.layer_sizes} needs {self.spec.param_count()}"
            )

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.spec)

    def validate_finite(self):
        if not np.isfinite(self.values).all():
            raise NumericError("parameter vector contains non-finite entries")


@dataclass(frozen=True)
class LossSpec:
    """Scalar objective over a network's output.

    Log-probability losses sum over the batch; ``mean_squared_error``
    averages over rows (matching the usual regression convention).
    """

    kind: str
    labels: np.ndarray | None = None
    targets: np.ndarray | None = None

    @classmethod
    def constant(cls):
        """Zero loss with zero gradient (baseline / term-disabling)."""
        return cls("constant")

    @classmethod
    def log_sigmoid(cls):
        """Sum of log D over the batch; sigmoid head."""
        return cls("log_sigmoid")

    @classmethod
    def log_one_minus_sigmoid(cls):
        """Sum of log(1 - D) over the batch; sigmoid head."""
        return cls("log_one_minus_sigmoid")

    @classmethod
    def log_softmax_class(cls, labels) -> "LossSpec":
        """Sum of log softmax at the per-row target index; softmax head."""
        return cls("log_softmax_class", labels=np.asarray(labels, dtype=np.int64))

    @classmethod
    def log_softmax_rest(cls):
        """Sum of log(1 - softmax_0): total mass on the non-reserved classes."""
        return cls("log_softmax_rest")

    @classmethod
    def mean_squared_error(cls, targets) -> "LossSpec":
        """Mean over rows of the squared error against targets; linear head."""
        return cls("mean_squared_error", targets=np.asarray(targets, dtype=np.float64))


_HEAD_FOR_LOSS = {
    "log_sigmoid": "sigmoid",
    "log_one_minus_sigmoid": "sigmoid",
    "log_softmax_class": "softmax",
    "log_softmax_rest": "softmax",
    "mean_squared_error": "linear",
}


def init_params(spec: NetworkSpec, init: str = "he", sigma: float = 1.0, seed: int = 0) -> ParamVector:
    """Draw a fresh parameter vector.

    ``he``: weights ~ N(0, 2/fan_in), biases 0 (deterministic optimization
    default).  ``prior``: every entry ~ N(0, sigma^2), the draw used to start
    sampler chains from the weight prior.
    """
    if init not in ("he", "prior"):
        raise ConfigurationError(f"unknown initialization {init!r}")
    if init == "prior" and sigma < 0:
        raise ConfigurationError(f"prior init needs sigma >= 0, got {sigma}")
    rng = substream(seed, "init", init, *spec.layer_sizes)
    if init == "prior":
        values = rng.normal(0.0, sigma, size=spec.param_count())
        return ParamVector(values, spec)
    chunks = []
    for fan_in, fan_out in spec.layer_shapes():
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=fan_in * fan_out)
        chunks.append(w)
        chunks.append(np.zeros(fan_out))
    return ParamVector(np.concatenate(chunks), spec)


def _unpack(spec: NetworkSpec, values: np.ndarray):
    """Views (no copies) of the per-layer weight matrices and bias vectors."""
    layers = []
    offset = 0
    for fan_in, fan_out in spec.layer_shapes():
        w = values[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = values[offset:offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def _check_batch(spec: NetworkSpec, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] < 1:
        raise ShapeError(f"batch must be a non-empty 2-D array, got shape {batch.shape}")
    if batch.shape[1] != spec.in_dim:
        raise ShapeError(f"batch has {batch.shape[1]} columns, network input is {spec.in_dim}")
    return batch


def _forward_trace(spec: NetworkSpec, values: np.ndarray, batch: np.ndarray):
    """Run the network, keeping pre-activations and activations for backprop.

    Returns (pre, act) where act[0] is the input, act[-1] the logits.
    """
    layers = _unpack(spec, values)
    pre = []
    act = [batch]
    h = batch
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        t = h @ w + b
        pre.append(t)
        h = np.maximum(t, 0.0) if i < last else t
        act.append(h)
    return pre, act


def _stable_sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    et = np.exp(t[~pos])
    out[~pos] = et / (1.0 + et)
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    # max-subtraction keeps the exponentials bounded
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _apply_head(spec: NetworkSpec, logits: np.ndarray) -> np.ndarray:
    if spec.output_head == "linear":
        return logits
    if spec.output_head == "sigmoid":
        return np.clip(_stable_sigmoid(logits), PROB_FLOOR, 1.0 - PROB_FLOOR)
    return _softmax(logits)


def forward(params: ParamVector, batch: np.ndarray) -> np.ndarray:
    """Evaluate the network on an n x in_dim batch.

    Sigmoid outputs are clamped to ``[PROB_FLOOR, 1 - PROB_FLOOR]``; softmax
    rows sum to 1.  Raises NumericError naming the first bad layer if any
    intermediate value is non-finite.
    """
    batch = _check_batch(params.spec, batch)
    pre, act = _forward_trace(params.spec, params.values, batch)
    out = _apply_head(params.spec, act[-1])
    if not np.isfinite(out).all():
        for i, t in enumerate(pre):
            if not np.isfinite(t).all():
                raise NumericError(f"non-finite output at layer {i}")
        raise NumericError(f"non-finite output at layer {len(pre) - 1}")
    return out


def _loss_and_dlogits(spec: NetworkSpec, logits: np.ndarray, loss: LossSpec):
    """Loss value and its gradient w.r.t. the pre-head logits."""
    kind = loss.kind
    if kind == "constant":
        return 0.0, np.zeros_like(logits)
    required = _HEAD_FOR_LOSS.get(kind)
    if required is None:
        raise ConfigurationError(f"unknown loss kind {kind!r}")
    if spec.output_head != required:
        raise ConfigurationError(f"loss {kind!r} needs a {required} head, network has {spec.output_head}")

    if kind == "mean_squared_error":
        targets = loss.targets
        if targets.shape != logits.shape:
            raise ShapeError(f"targets shape {targets.shape} != output shape {logits.shape}")
        resid = logits - targets
        n = logits.shape[0]
        return float((resid * resid).sum() / n), 2.0 * resid / n

    if kind in ("log_sigmoid", "log_one_minus_sigmoid"):
        s = _stable_sigmoid(logits)
        clamped_lo = s < PROB_FLOOR
        clamped_hi = s > 1.0 - PROB_FLOOR
        sc = np.clip(s, PROB_FLOOR, 1.0 - PROB_FLOOR)
        if kind == "log_sigmoid":
            value = float(np.log(sc).sum())
            d = 1.0 - s
        else:
            value = float(np.log1p(-sc).sum())
            d = -s
        d = np.where(clamped_lo | clamped_hi, 0.0, d)
        return value, d

    s = _softmax(logits)
    if kind == "log_softmax_class":
        labels = loss.labels
        if labels.shape != (logits.shape[0],):
            raise ShapeError(f"labels shape {labels.shape} != ({logits.shape[0]},)")
        if labels.min() < 0 or labels.max() >= logits.shape[1]:
            raise DataError(f"class index out of range [0, {logits.shape[1] - 1}]")
        rows = np.arange(logits.shape[0])
        p = s[rows, labels]
        pc = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
        value = float(np.log(pc).sum())
        inside = (p >= PROB_FLOOR) & (p <= 1.0 - PROB_FLOOR)
        d = -s.copy()
        d[rows, labels] += 1.0
        d *= inside[:, None]
        return value, d

    # log_softmax_rest: log of the total mass off class 0
    s0 = s[:, 0]
    rest = 1.0 - s0
    restc = np.clip(rest, PROB_FLOOR, 1.0 - PROB_FLOOR)
    value = float(np.log(restc).sum())
    inside = (rest >= PROB_FLOOR) & (rest <= 1.0 - PROB_FLOOR)
    safe_rest = np.where(rest > 0, rest, 1.0)
    d = s * (s0 / safe_rest)[:, None]
    d[:, 0] = -s0
    d *= inside[:, None]
    return value, d


def _backward(spec: NetworkSpec, values: np.ndarray, pre, act, dlogits: np.ndarray):
    """Backpropagate d(loss)/d(logits) to parameter and input gradients."""
    layers = _unpack(spec, values)
    grad = np.zeros_like(values)
    glayers = _unpack(spec, grad)
    g = dlogits
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        gw, gb = glayers[i]
        gw += act[i].T @ g
        gb += g.sum(axis=0)
        g = g @ w.T
        if i > 0:
            g = g * (pre[i - 1] > 0)
    return grad, g


def loss_grad(params: ParamVector, batch: np.ndarray, loss: LossSpec):
    """Loss value and gradient w.r.t. the parameters."""
    value, grad, _ = loss_grad_full(params, batch, loss)
    return value, grad


def grad_wrt_input(params: ParamVector, batch: np.ndarray, loss: LossSpec) -> np.ndarray:
    """Gradient of the loss w.r.t. the input batch (chain-rule link)."""
    _, _, dx = loss_grad_full(params, batch, loss)
    return dx


def loss_grad_full(params: ParamVector, batch: np.ndarray, loss: LossSpec):
    """Loss value plus gradients w.r.t. both the parameters and the input."""
    batch = _check_batch(params.spec, batch)
    pre, act = _forward_trace(params.spec, params.values, batch)
    value, dlogits = _loss_and_dlogits(params.spec, act[-1], loss)
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss value {value}")
    grad, dx = _backward(params.spec, params.values, pre, act, dlogits)
    return value, ParamVector(grad, params.spec), dx
