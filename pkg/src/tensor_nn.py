# -*- coding: utf-8 -*-

"""Small deterministic feed-forward network engine on numpy (float64).

Layers work on batch-first arrays. Sequence layers use ``(batch, length,
channels)``; ``Dense`` flattens whatever it receives. A ``LayerGraph`` is a
plain stack of layers with a fixed per-sample input shape.

Supported layers: ``dense``, ``conv1d`` (valid, stride 1), ``maxpool1d``,
``deconv1d`` (adjoint of a strided conv1d), ``relu``, ``sigmoid``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import streams
from .utils import PROB_EPS

log = logging.getLogger(__name__)

Tensor = np.ndarray

LN2 = math.log(2.0)


class ArchitectureError(ValueError):
    def __init__(self, detail: str):
        super().__init__(f"architecture too deep for input length: {detail}")


class ShapeMismatchError(ValueError):
    def __init__(self, what: str, expected, actual):
        super().__init__(f"{what}: forma attesa {tuple(expected)}, ricevuta {tuple(actual)}")


class StaleCacheError(RuntimeError):
    pass


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, epoch: int, loss: float):
        super().__init__(
            f"training divergente al passo {step} (epoca {epoch}): loss={loss!r}; "
            "prova un epsilon AdaDelta più grande o un learning rate minore"
        )
        self.step = step


def compute_feature_map_lengths(k: int, widths: Sequence[int], pool_window: int = 2, pool_stride: int = 2) -> list[int]:
    """Feature-map lengths of a conv(valid) + maxpool stack.

    K_1 = k - l_1 + 1 and, for d >= 2, K_d = floor((K_{d-1} - w) / s) + 1 - l_d + 1,
    which for w = s = 2 is floor(K_{d-1} / 2) - l_d + 1.
    """

    if not widths:
        return []
    lengths: list[int] = []
    current = int(k)
    for d, width in enumerate(widths, start=1):
        if width < 1:
            raise ValueError(f"larghezza del filtro non valida al livello {d}: {width}")
        if d > 1:
            current = (current - pool_window) // pool_stride + 1 if current >= pool_window else 0
        current = current - width + 1
        if current < 1:
            raise ArchitectureError(f"K_{d} = {current} < 1 (k={k}, widths={list(widths)})")
        lengths.append(current)
    return lengths


###############################################################################
# Layers
###############################################################################


class Layer:
    kind = "layer"
    param_names: tuple[str, ...] = ()

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}

    def build(self, in_shape: tuple[int, ...], rng: np.random.Generator) -> tuple[int, ...]:
        """Allocate parameters for per-sample *in_shape*; return the output shape."""
        return in_shape

    def forward(self, x: Tensor):
        raise NotImplementedError

    def backward(self, ctx, grad: Tensor) -> tuple[Tensor, dict[str, np.ndarray]]:
        raise NotImplementedError

    def descriptor(self) -> dict:
        return {"type": self.kind}

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v}" for k, v in self.descriptor().items() if k != "type")
        return f"{self.kind}({args})"


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _sequence_shape(layer: Layer, in_shape) -> tuple[int, int]:
    if len(in_shape) != 2:
        raise ShapeMismatchError(f"{layer.kind} richiede (lunghezza, canali)", ("L", "C"), in_shape)
    return int(in_shape[0]), int(in_shape[1])


class Dense(Layer):
    kind = "dense"
    param_names = ("W", "b")

    def __init__(self, out: int, bias_init: float = 0.0):
        super().__init__()
        self.out = int(out)
        self.bias_init = float(bias_init)

    def build(self, in_shape, rng):
        fan_in = int(np.prod(in_shape))
        self.params = {
            "W": _glorot(rng, (fan_in, self.out), fan_in, self.out),
            "b": np.full(self.out, self.bias_init),
        }
        return (self.out,)

    def forward(self, x):
        xf = x.reshape(x.shape[0], -1)
        return xf @ self.params["W"] + self.params["b"], (x.shape, xf)

    def backward(self, ctx, grad):
        shape, xf = ctx
        grads = {"W": xf.T @ grad, "b": grad.sum(axis=0)}
        return (grad @ self.params["W"].T).reshape(shape), grads

    def descriptor(self):
        d = {"type": self.kind, "out": self.out}
        if self.bias_init:
            d["bias_init"] = self.bias_init
        return d


class Conv1D(Layer):
    kind = "conv1d"
    param_names = ("W", "b")

    def __init__(self, filters: int, width: int):
        super().__init__()
        self.filters = int(filters)
        self.width = int(width)

    def build(self, in_shape, rng):
        length, channels = _sequence_shape(self, in_shape)
        if length < self.width:
            raise ArchitectureError(f"conv1d larghezza {self.width} su lunghezza {length}")
        self.params = {
            "W": _glorot(rng, (self.width, channels, self.filters), self.width * channels, self.width * self.filters),
            "b": np.zeros(self.filters),
        }
        return (length - self.width + 1, self.filters)

    def forward(self, x):
        b, length, channels = x.shape
        k = length - self.width + 1
        win = sliding_window_view(x, self.width, axis=1)  # (B, K, C, w)
        cols = np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(b * k, self.width * channels)
        w2 = self.params["W"].reshape(self.width * channels, self.filters)
        y = (cols @ w2).reshape(b, k, self.filters) + self.params["b"]
        return y, (x.shape, cols)

    def backward(self, ctx, grad):
        (b, length, channels), cols = ctx
        k = length - self.width + 1
        g2 = grad.reshape(b * k, self.filters)
        w2 = self.params["W"].reshape(self.width * channels, self.filters)
        grads = {"W": (cols.T @ g2).reshape(self.params["W"].shape), "b": g2.sum(axis=0)}
        dcols = (g2 @ w2.T).reshape(b, k, self.width, channels)
        dx = np.zeros((b, length, channels))
        for j in range(self.width):
            dx[:, j:j + k, :] += dcols[:, :, j, :]
        return dx, grads

    def descriptor(self):
        return {"type": self.kind, "filters": self.filters, "width": self.width}


class MaxPool1D(Layer):
    kind = "maxpool1d"

    def __init__(self, window: int = 2, stride: int = 2):
        super().__init__()
        self.window = int(window)
        self.stride = int(stride)

    def _out_len(self, length: int) -> int:
        return (length - self.window) // self.stride + 1

    def build(self, in_shape, rng):
        length, channels = _sequence_shape(self, in_shape)
        if length < self.window:
            raise ArchitectureError(f"maxpool1d finestra {self.window} su lunghezza {length}")
        return (self._out_len(length), channels)

    def forward(self, x):
        k = self._out_len(x.shape[1])
        win = sliding_window_view(x, self.window, axis=1)[:, : (k - 1) * self.stride + 1 : self.stride]
        idx = np.argmax(win, axis=-1)  # ties -> lowest index
        y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return y, (x.shape, idx)

    def backward(self, ctx, grad):
        shape, idx = ctx
        b, k, c = idx.shape
        pos = np.arange(k)[None, :, None] * self.stride + idx
        bi = np.broadcast_to(np.arange(b)[:, None, None], idx.shape)
        ci = np.broadcast_to(np.arange(c)[None, None, :], idx.shape)
        dx = np.zeros(shape)
        np.add.at(dx, (bi, pos, ci), grad)
        return dx, {}

    def descriptor(self):
        return {"type": self.kind, "window": self.window, "stride": self.stride}


class Deconv1D(Layer):
    """Transposed convolution; output length stride*(L-1) + width."""

    kind = "deconv1d"
    param_names = ("W", "b")

    def __init__(self, filters: int, width: int, stride: int = 1):
        super().__init__()
        self.filters = int(filters)
        self.width = int(width)
        self.stride = int(stride)

    def build(self, in_shape, rng):
        length, channels = _sequence_shape(self, in_shape)
        self.params = {
            "W": _glorot(rng, (self.width, channels, self.filters), self.width * channels, self.width * self.filters),
            "b": np.zeros(self.filters),
        }
        return (self.stride * (length - 1) + self.width, self.filters)

    def _taps(self, length: int):
        span = self.stride * (length - 1) + 1
        return [slice(j, j + span, self.stride) for j in range(self.width)]

    def forward(self, x):
        b, length, channels = x.shape
        w_cf = self.params["W"].transpose(1, 0, 2).reshape(channels, self.width * self.filters)
        xf = x.reshape(b * length, channels)
        z = (xf @ w_cf).reshape(b, length, self.width, self.filters)
        y = np.zeros((b, self.stride * (length - 1) + self.width, self.filters))
        for j, sl in enumerate(self._taps(length)):
            y[:, sl, :] += z[:, :, j, :]
        return y + self.params["b"], (x.shape, xf)

    def backward(self, ctx, grad):
        (b, length, channels), xf = ctx
        gz = np.stack([grad[:, sl, :] for sl in self._taps(length)], axis=2)  # (B, L, w, F)
        gz2 = gz.reshape(b * length, self.width * self.filters)
        w_cf = self.params["W"].transpose(1, 0, 2).reshape(channels, self.width * self.filters)
        gw = (xf.T @ gz2).reshape(channels, self.width, self.filters).transpose(1, 0, 2)
        grads = {"W": np.ascontiguousarray(gw), "b": grad.sum(axis=(0, 1))}
        return (gz2 @ w_cf.T).reshape(b, length, channels), grads

    def descriptor(self):
        return {"type": self.kind, "filters": self.filters, "width": self.width, "stride": self.stride}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        return np.maximum(x, 0.0), x > 0

    def backward(self, ctx, grad):
        return grad * ctx, {}


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x):
        e = np.exp(-np.abs(x))
        y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return y, y

    def backward(self, ctx, grad):
        return grad * ctx * (1.0 - ctx), {}


_LAYER_TYPES: dict[str, type[Layer]] = {
    cls.kind: cls for cls in (Dense, Conv1D, MaxPool1D, Deconv1D, ReLU, Sigmoid)
}

_SPEC_ARGS = {
    "dense": ("out", "bias_init"),
    "conv1d": ("filters", "width"),
    "maxpool1d": ("window", "stride"),
    "deconv1d": ("filters", "width", "stride"),
    "relu": (),
    "sigmoid": (),
}


def layer_from_descriptor(desc: dict) -> Layer:
    kind = desc.get("type")
    if kind not in _LAYER_TYPES:
        raise ValueError(f"tipo di layer sconosciuto: {kind!r}")
    kwargs = {k: v for k, v in desc.items() if k != "type"}
    return _LAYER_TYPES[kind](**kwargs)


def parse_layer_spec(spec: str) -> list[Layer]:
    """``"conv1d:16:5,relu,maxpool1d:2:2,dense:4,sigmoid"`` -> layers."""

    layers: list[Layer] = []
    for token in (t.strip() for t in spec.split(",")):
        if not token:
            continue
        kind, *args = token.split(":")
        kind = kind.strip().lower()
        if kind not in _SPEC_ARGS:
            raise ValueError(f"tipo di layer sconosciuto: {kind!r}")
        names = _SPEC_ARGS[kind]
        if len(args) > len(names):
            raise ValueError(f"troppi argomenti per {kind}: {token!r}")
        kwargs = {}
        for name, raw in zip(names, args):
            kwargs[name] = float(raw) if name == "bias_init" else int(raw)
        layers.append(_LAYER_TYPES[kind](**kwargs))
    if not layers:
        raise ValueError("specifica dei layer vuota")
    return layers


def format_layer_spec(layers: Iterable[Layer]) -> str:
    parts = []
    for layer in layers:
        desc = layer.descriptor()
        args = [str(desc[n]) for n in _SPEC_ARGS[layer.kind] if n in desc]
        parts.append(":".join([layer.kind, *args]))
    return ",".join(parts)


###############################################################################
# Graph, forward, backward
###############################################################################


class LayerGraph:
    """Layer stack with a fixed per-sample input shape and seeded init."""

    def __init__(self, layers: Sequence[Layer], input_shape: Sequence[int], init_seed: int = 0, metadata: Optional[dict] = None):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.init_seed = int(init_seed)
        self.metadata = dict(metadata or {})
        self.version = 0
        shape = self.input_shape
        self.shapes = [shape]
        for i, layer in enumerate(self.layers):
            shape = layer.build(shape, streams.stream_rng(self.init_seed, i, streams.INIT))
            self.shapes.append(shape)

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1]

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        return [
            (f"{i}.{layer.kind}.{name}", layer.params[name])
            for i, layer in enumerate(self.layers)
            for name in layer.param_names
        ]

    def parameters(self) -> list[np.ndarray]:
        return [p for _, p in self.named_parameters()]

    def mark_updated(self) -> None:
        self.version += 1

    def describe(self) -> list[dict]:
        return [layer.descriptor() for layer in self.layers]

    def predict(self, x: Tensor, batch_size: int = 256) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        outs = [forward(self, x[i:i + batch_size])[0] for i in range(0, x.shape[0], batch_size)]
        return np.concatenate(outs, axis=0) if outs else np.zeros((0, *self.output_shape))

    def __repr__(self) -> str:
        return f"LayerGraph(input={self.input_shape}, layers=[{format_layer_spec(self.layers)}])"


@dataclass
class ForwardCache:
    graph_id: int
    version: int
    contexts: list
    output: Tensor


def forward(model: LayerGraph, x: Tensor) -> tuple[Tensor, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != model.input_shape:
        raise ShapeMismatchError("input del modello", ("B", *model.input_shape), x.shape)
    contexts = []
    for layer in model.layers:
        x, ctx = layer.forward(x)
        contexts.append(ctx)
    return x, ForwardCache(id(model), model.version, contexts, x)


def backward(model: LayerGraph, cache: ForwardCache, grad_out: Tensor) -> list[np.ndarray]:
    """Reverse-mode gradients, aligned with ``model.parameters()``."""

    if cache is None or cache.graph_id != id(model) or cache.version != model.version:
        raise StaleCacheError("cache del forward assente o obsoleta: ripetere il forward dopo l'aggiornamento dei pesi")
    grad = np.asarray(grad_out, dtype=np.float64)
    if grad.shape != cache.output.shape:
        raise ShapeMismatchError("gradiente della loss", cache.output.shape, grad.shape)
    per_layer: list[dict] = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        grad, per_layer[i] = model.layers[i].backward(cache.contexts[i], grad)
    return [per_layer[i][name] for i, layer in enumerate(model.layers) for name in layer.param_names]


###############################################################################
# Losses
###############################################################################


def negative_doubling_rate_loss(q, b) -> tuple[float, np.ndarray]:
    """-R = -(1/N) Σ [b log2 q + (1-b) log2(1-q)] and its gradient w.r.t. q."""

    q = np.asarray(q, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if q.size == 0:
        raise ValueError("batch vuoto")
    if b.shape != q.shape:
        raise ShapeMismatchError("bit del batch", q.shape, b.shape)
    qc = np.clip(q, PROB_EPS, 1.0 - PROB_EPS)
    n = q.size
    loss = -np.sum(b * np.log2(qc) + (1.0 - b) * np.log2(1.0 - qc)) / n
    grad = -(b / qc - (1.0 - b) / (1.0 - qc)) / (n * LN2)
    return float(loss), grad


def cross_entropy_loss(scores, label: int) -> tuple[float, np.ndarray]:
    """Multi-label cross entropy over T sigmoid outputs with a one-hot target."""

    s = np.asarray(scores, dtype=np.float64)
    if not 0 <= int(label) < s.size:
        raise ValueError(f"etichetta {label} fuori da [0, {s.size})")
    y = np.zeros_like(s)
    y[int(label)] = 1.0
    sc = np.clip(s, PROB_EPS, 1.0 - PROB_EPS)
    loss = -np.sum(y * np.log(sc) + (1.0 - y) * np.log(1.0 - sc))
    grad = -(y / sc - (1.0 - y) / (1.0 - sc))
    return float(loss), grad


def cross_entropy_batch(scores, labels) -> tuple[float, np.ndarray]:
    """Batch mean of :func:`cross_entropy_loss`; ``scores`` is (B, T)."""

    s = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if s.ndim != 2 or s.shape[0] != labels.size:
        raise ShapeMismatchError("punteggi del batch", (labels.size, "T"), s.shape)
    if labels.size == 0:
        raise ValueError("batch vuoto")
    if labels.min() < 0 or labels.max() >= s.shape[1]:
        raise ValueError(f"etichette fuori da [0, {s.shape[1]})")
    y = np.zeros_like(s)
    y[np.arange(labels.size), labels] = 1.0
    sc = np.clip(s, PROB_EPS, 1.0 - PROB_EPS)
    b = labels.size
    loss = -np.sum(y * np.log(sc) + (1.0 - y) * np.log(1.0 - sc)) / b
    grad = -(y / sc - (1.0 - y) / (1.0 - sc)) / b
    return float(loss), grad


def _doubling_rate_batch(out, targets):
    return negative_doubling_rate_loss(out, np.asarray(targets, dtype=np.float64).reshape(out.shape))


LOSSES: dict[str, Callable] = {
    "doubling_rate": _doubling_rate_batch,
    "cross_entropy": cross_entropy_batch,
}


###############################################################################
# Optimizer and training loop
###############################################################################


@dataclass
class AdaDeltaState:
    rho: float = 0.95
    epsilon: float = 1e-7
    learning_rate: float = 1.0
    decay: float = 0.0
    iterations: int = 0
    accum_grad: list = field(default_factory=list)
    accum_update: list = field(default_factory=list)


def adadelta_step(state: AdaDeltaState, params, grads: Sequence[np.ndarray]) -> AdaDeltaState:
    """One in-place AdaDelta update of *params* (a LayerGraph or array list)."""

    graph = params if isinstance(params, LayerGraph) else None
    targets = graph.parameters() if graph is not None else list(params)
    grads = list(grads)
    if len(grads) != len(targets):
        raise ValueError(f"{len(targets)} parametri ma {len(grads)} gradienti")
    for p, g in zip(targets, grads):
        if p.shape != np.shape(g):
            raise ShapeMismatchError("gradiente", p.shape, np.shape(g))
    if not state.accum_grad:
        state.accum_grad = [np.zeros_like(p) for p in targets]
        state.accum_update = [np.zeros_like(p) for p in targets]

    rho, eps = state.rho, state.epsilon
    lr = state.learning_rate / (1.0 + state.decay * state.iterations)
    for p, g, eg, ex in zip(targets, grads, state.accum_grad, state.accum_update):
        eg *= rho
        eg += (1.0 - rho) * g * g
        dx = -(np.sqrt(ex + eps) / np.sqrt(eg + eps)) * g
        ex *= rho
        ex += (1.0 - rho) * dx * dx
        p += lr * dx
    state.iterations += 1
    if graph is not None:
        graph.mark_updated()
    return state


BatchHook = Callable[[np.ndarray, np.ndarray, int], tuple[np.ndarray, np.ndarray]]


@dataclass
class TrainResult:
    model: LayerGraph
    history: list[float]
    optimizer: AdaDeltaState

    @property
    def final_loss(self) -> float:
        return self.history[-1] if self.history else float("nan")


def train(
    model: LayerGraph,
    dataset: tuple[np.ndarray, np.ndarray],
    loss: str = "doubling_rate",
    batch_size: int = 100,
    epochs: int = 1,
    seed: int = 0,
    optimizer: Optional[AdaDeltaState] = None,
    batch_hook: Optional[BatchHook] = None,
    log_every: int = 0,
    grad_scale: float = 1.0,
) -> TrainResult:
    """Mini-batch training with AdaDelta.

    The shuffle of epoch ``e`` is substream ``e`` of *seed*; a batch larger
    than the dataset means one batch per epoch. ``batch_hook(x, y, step)``
    may transform each batch (e.g. add fresh channel noise). *grad_scale*
    multiplies the loss gradient before backpropagation; the recorded history
    stays unscaled.
    """

    if loss not in LOSSES:
        raise ValueError(f"loss sconosciuta: {loss!r} (disponibili: {', '.join(LOSSES)})")
    x, y = dataset
    x = np.asarray(x)
    y = np.asarray(y)
    n = x.shape[0]
    if n == 0:
        raise ValueError("dataset vuoto")
    if y.shape[0] != n:
        raise ValueError(f"{n} input ma {y.shape[0]} target")
    loss_fn = LOSSES[loss]
    opt = optimizer or AdaDeltaState()
    bs = max(1, min(int(batch_size), n))
    history: list[float] = []
    step = 0
    for epoch in range(int(epochs)):
        order = streams.stream_rng(seed, epoch, streams.SHUFFLE).permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            xb, yb = x[idx], y[idx]
            if batch_hook is not None:
                xb, yb = batch_hook(xb, yb, step)
            out, cache = forward(model, xb)
            value, grad = loss_fn(out, yb)
            if not math.isfinite(value) or not np.all(np.isfinite(grad)):
                raise TrainingDivergedError(step, epoch, value)
            if grad_scale != 1.0:
                grad = grad * grad_scale
            grads = backward(model, cache, grad)
            adadelta_step(opt, model, grads)
            history.append(value)
            step += 1
            if log_every and step % log_every == 0:
                log.info("epoca %d passo %d: loss %.6f", epoch, step, value)
    return TrainResult(model, history, opt)


def write_loss_history(path, history: Sequence[float]) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "loss"])
        for i, value in enumerate(history):
            w.writerow([i, repr(float(value))])
    return path
