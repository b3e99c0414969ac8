"""Dense ReLU networks with exact backpropagation to parameters and inputs.

Weights live in a single flat vector so they can be treated as a point in
parameter space by the Gaussian machinery.  The flat layout is, per layer,
the weight matrix in row-major order followed by the bias vector (when the
architecture uses biases).  Labels are 1-based: y ranges over {1..k}.

All public operations are pure functions of their arguments; arrays are
treated as read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import softmax

NLL = "nll"
MULTICLASS_HINGE = "hinge"
LOSS_KINDS = (NLL, MULTICLASS_HINGE)


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer shape of a dense feed-forward classifier.

    An empty ``hidden_widths`` means a plain linear model W in R^{k x d}.
    ``bias=None`` resolves to the convention: no bias for the linear model
    (parameter count exactly k*d), biases on for proper MLPs.
    """

    input_dim: int
    class_count: int
    hidden_widths: tuple[int, ...] = ()
    activation: str = "relu"
    bias: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or self.class_count < 1:
            raise ValueError("input_dim and class_count must be positive")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden widths must be positive")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation: {self.activation!r}")
        if self.bias is None:
            object.__setattr__(self, "bias", bool(self.hidden_widths))

    @property
    def is_linear(self) -> bool:
        return not self.hidden_widths

    @property
    def depth(self) -> int:
        """Number of weight matrices (1 for the linear model)."""
        return len(self.hidden_widths) + 1

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_widths, self.class_count]
        return list(zip(dims[:-1], dims[1:]))

    def param_count(self) -> int:
        extra = 1 if self.bias else 0
        return sum((fan_in + extra) * fan_out for fan_in, fan_out in self.layer_dims())


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat float64 weight vector tied to an architecture."""

    values: np.ndarray
    layout: MlpArchitecture

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        object.__setattr__(self, "values", values)
        expected = self.layout.param_count()
        if values.shape != (expected,):
            raise ValueError(f"expected {expected} parameters, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("parameter vector contains non-finite entries")


def unpack_layers(params: ParamVector) -> list[tuple[np.ndarray, np.ndarray | None]]:
    """Views (W, b) per layer; W has shape (fan_out, fan_in)."""
    arch = params.layout
    out = []
    offset = 0
    for fan_in, fan_out in arch.layer_dims():
        w = params.values[offset : offset + fan_in * fan_out].reshape(fan_out, fan_in)
        offset += fan_in * fan_out
        b = None
        if arch.bias:
            b = params.values[offset : offset + fan_out]
            offset += fan_out
        out.append((w, b))
    return out


def pack_layers(arch: MlpArchitecture, layers) -> np.ndarray:
    parts = []
    for w, b in layers:
        parts.append(np.asarray(w, dtype=np.float64).ravel())
        if arch.bias:
            parts.append(np.asarray(b, dtype=np.float64).ravel())
    return np.concatenate(parts)


def equal_param_hidden_widths(depth: int, input_dim: int, class_count: int,
                              target_params: int, bias: bool = True) -> tuple[int, ...]:
    """Uniform hidden width giving roughly ``target_params`` parameters.

    ``depth`` counts weight matrices, so depth d uses d-1 hidden layers.
    Used by variance/depth sweeps so that models of different depth are
    comparable in size.
    """
    if depth < 2:
        raise ValueError("equal-parameter widths only apply to depth >= 2")

    def count(h: int) -> int:
        arch = MlpArchitecture(input_dim, class_count, (h,) * (depth - 1), bias=bias)
        return arch.param_count()

    h = 1
    while count(h) < target_params:
        h += 1
    if h > 1 and abs(count(h - 1) - target_params) <= abs(count(h) - target_params):
        h -= 1
    return (h,) * (depth - 1)


def _check_input(arch: MlpArchitecture, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (arch.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({arch.input_dim},)")
    return x


def _check_label(arch: MlpArchitecture, y: int) -> int:
    y = int(y)
    if not 1 <= y <= arch.class_count:
        raise ValueError(f"label {y} out of range 1..{arch.class_count}")
    return y


def _forward_cached(params: ParamVector, x_batch: np.ndarray):
    """Batch forward pass keeping pre-activations for backprop.

    Returns (activations entering each layer, pre-activations per layer,
    logits).  ReLU is applied after every layer except the last.
    """
    layers = unpack_layers(params)
    acts = [x_batch]
    pres = []
    a = x_batch
    for i, (w, b) in enumerate(layers):
        z = a @ w.T
        if b is not None:
            z = z + b
        pres.append(z)
        if i < len(layers) - 1:
            a = np.maximum(z, 0.0)
            acts.append(a)
    return acts, pres, pres[-1]


def batch_forward(params: ParamVector, x_batch: np.ndarray) -> np.ndarray:
    x_batch = np.asarray(x_batch, dtype=np.float64)
    return _forward_cached(params, x_batch)[2]


def forward(params: ParamVector, x) -> np.ndarray:
    """Logits for a single input vector."""
    x = _check_input(params.layout, x)
    return batch_forward(params, x[None, :])[0]


def logit_loss(logits: np.ndarray, y_batch: np.ndarray, kind: str) -> np.ndarray:
    """Per-example loss from logits; y_batch holds 1-based labels."""
    y0 = np.asarray(y_batch, dtype=np.int64) - 1
    rows = np.arange(logits.shape[0])
    if kind == NLL:
        # (max - t_y) + log sum exp(t - max): the shift cancels before any
        # large intermediate forms, so adding a constant to all logits
        # leaves the result unchanged to the last bit.
        tmax = logits.max(axis=1)
        spread = np.exp(logits - tmax[:, None]).sum(axis=1)
        return (tmax - logits[rows, y0]) + np.log(spread)
    if kind == MULTICLASS_HINGE:
        margins = logits - logits[rows, y0][:, None] + 1.0
        margins[rows, y0] = 0.0
        return margins.max(axis=1)
    raise ValueError(f"unknown loss kind: {kind!r}")


def logit_gradient(logits: np.ndarray, y_batch: np.ndarray, kind: str) -> np.ndarray:
    """Gradient of the loss with respect to the logits, per example.

    For NLL this is softmax(t) - e_y.  For the hinge loss it is
    e_{y*} - e_y for the attaining class y* (ties resolved to the smallest
    index, matching np.argmax), or zero when the margin term y* = y wins.
    """
    y0 = np.asarray(y_batch, dtype=np.int64) - 1
    rows = np.arange(logits.shape[0])
    if kind == NLL:
        g = softmax(logits, axis=1)
        g[rows, y0] -= 1.0
        return g
    if kind == MULTICLASS_HINGE:
        margins = logits - logits[rows, y0][:, None] + 1.0
        margins[rows, y0] = 0.0
        ystar = margins.argmax(axis=1)
        g = np.zeros_like(logits)
        hit = ystar != y0
        g[rows[hit], ystar[hit]] = 1.0
        g[rows[hit], y0[hit]] = -1.0
        return g
    raise ValueError(f"unknown loss kind: {kind!r}")


def batch_losses(params: ParamVector, x_batch, y_batch, kind: str) -> np.ndarray:
    x_batch = np.asarray(x_batch, dtype=np.float64)
    logits = batch_forward(params, x_batch)
    return logit_loss(logits, y_batch, kind)


def loss(params: ParamVector, x, y: int, kind: str) -> float:
    """Loss of a single example; nonnegative for both kinds."""
    x = _check_input(params.layout, x)
    y = _check_label(params.layout, y)
    return float(batch_losses(params, x[None, :], np.array([y]), kind)[0])


def _backward(params: ParamVector, x_batch, y_batch, kind: str, want_params: bool):
    """Shared backprop; returns (per-example input grads, mean param grad)."""
    x_batch = np.asarray(x_batch, dtype=np.float64)
    layers = unpack_layers(params)
    acts, pres, logits = _forward_cached(params, x_batch)
    g = logit_gradient(logits, y_batch, kind)

    n = x_batch.shape[0]
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        w, b = layers[i]
        if want_params:
            dw = g.T @ acts[i] / n
            db = g.mean(axis=0) if b is not None else None
            grads[i] = (dw, db)
        g = g @ w
        if i > 0:
            # ReLU subgradient: derivative 0 at the kink.
            g = g * (pres[i - 1] > 0.0)
    mean_param_grad = pack_layers(params.layout, grads) if want_params else None
    return g, mean_param_grad


def batch_input_grads(params: ParamVector, x_batch, y_batch, kind: str) -> np.ndarray:
    """Per-example gradient of the loss with respect to the input, (n, d)."""
    return _backward(params, x_batch, y_batch, kind, want_params=False)[0]


def batch_param_grad(params: ParamVector, x_batch, y_batch, kind: str) -> np.ndarray:
    """Gradient of the mean batch loss with respect to the flat weights."""
    return _backward(params, x_batch, y_batch, kind, want_params=True)[1]


def grad_input(params: ParamVector, x, y: int, kind: str) -> np.ndarray:
    """Gradient of the loss with respect to the input vector x."""
    x = _check_input(params.layout, x)
    y = _check_label(params.layout, y)
    return batch_input_grads(params, x[None, :], np.array([y]), kind)[0]


def grad_params(params: ParamVector, x, y: int, kind: str) -> np.ndarray:
    """Gradient with respect to the weights, in the flat ParamVector layout."""
    x = _check_input(params.layout, x)
    y = _check_label(params.layout, y)
    return batch_param_grad(params, x[None, :], np.array([y]), kind)


def lipschitz_bound(kind: str) -> float:
    """Uniform bound L on the logit-space gradient norm ||grad_t l(t, y)||.

    NLL: ||softmax(t) - e_y|| < sqrt(2) (approached as the softmax
    concentrates on a wrong class).  Hinge: the subgradient is either zero
    or +-1 at exactly two coordinates, so the norm is at most sqrt(2).
    """
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind: {kind!r}")
    return math.sqrt(2.0)
