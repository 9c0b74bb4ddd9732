# -*- coding: utf-8 -*-

"""Natural-redundancy soft decoding.

A soft decoder turns k noisy information bits into posteriors
``q_i = Pr{x_i = 1 | y, p}``. Three families live here:

* the file-type recognizer (FTR), a conv/pool/dense classifier that routes
  each segment to the decoder of its type;
* neural soft decoders, conv layers followed by deconv layers that output
  one sigmoid per bit;
* the forward-backward oracle for a Markov source, which computes the
  exact posterior and is used to check the rest of the pipeline.

``llr_fusion`` adds the posterior to the channel LLRs of the information
positions before belief propagation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Protocol, Sequence, runtime_checkable

import numpy as np

from . import streams
from .channel import ChannelSpec, noise_mask
from .tensor_nn import (
    AdaDeltaState,
    ArchitectureError,
    Conv1D,
    Deconv1D,
    Dense,
    LayerGraph,
    MaxPool1D,
    ReLU,
    Sigmoid,
    TrainResult,
    compute_feature_map_lengths,
    parse_layer_spec,
    train,
)
from .utils import LLR_MAX, PROB_EPS, BitSegment, LengthMismatchError, as_bits

log = logging.getLogger(__name__)

MAX_STATES = 1 << 16
MIN_FTR_FEATURE_LENGTH = 4

# Posterior vector q_i = Pr{x_i = 1 | y, p}, clipped to [PROB_EPS, 1 - PROB_EPS]
SoftPosterior = np.ndarray


def clip_posterior(q) -> SoftPosterior:
    return np.clip(np.asarray(q, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)


def network_input(bits) -> np.ndarray:
    """Map bits to the network input convention: 0 -> +1.0, 1 -> -1.0."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


@runtime_checkable
class SoftDecoder(Protocol):
    file_type: Optional[str]
    p_dnn: Optional[float]

    def decode(self, noisy, p: float) -> SoftPosterior:
        ...


###############################################################################
# File-type recognition
###############################################################################


@dataclass
class FileTypeModel:
    model: LayerGraph
    registry: tuple[str, ...]

    def __post_init__(self):
        self.registry = tuple(self.registry)
        if self.model.output_shape != (len(self.registry),):
            raise ArchitectureError(
                f"uscita FTR {self.model.output_shape} ma registro di {len(self.registry)} tipi"
            )

    @property
    def k(self) -> int:
        return self.model.input_shape[0]

    @classmethod
    def from_graph(cls, model: LayerGraph) -> "FileTypeModel":
        registry = model.metadata.get("registry")
        if not registry:
            raise ValueError("il modello non contiene il registro dei tipi di file")
        return cls(model, tuple(registry))


def ftr_classify(noisy, model: FileTypeModel) -> tuple[int, np.ndarray]:
    """Return (0-based type index, T sigmoid scores); ties go to the lowest index."""

    bits = as_bits(noisy)
    if bits.size != model.k:
        raise LengthMismatchError("segmento per FTR", model.k, bits.size)
    scores = model.model.predict(network_input(bits)[None, :, None])[0]
    return int(np.argmax(scores)), scores


def build_ftr_model(
    k: int,
    registry: Sequence[str],
    depth: int = 3,
    width: int = 3,
    first_filters: int = 32,
    filters: int = 64,
    hidden: int = 64,
    init_seed: int = 0,
    layer_spec: Optional[str] = None,
    p_dnn: Optional[float] = None,
) -> FileTypeModel:
    """Conv(width)/ReLU/MaxPool(2,2) blocks, then a dense head with T sigmoid outputs."""

    registry = tuple(registry)
    if layer_spec:
        layers = parse_layer_spec(layer_spec)
    else:
        lengths = compute_feature_map_lengths(k, [width] * depth)
        if lengths[-1] < MIN_FTR_FEATURE_LENGTH:
            raise ArchitectureError(f"lunghezza finale {lengths[-1]} < {MIN_FTR_FEATURE_LENGTH} (k={k}, depth={depth})")
        layers = []
        for d in range(depth):
            layers += [Conv1D(first_filters if d == 0 else filters, width), ReLU(), MaxPool1D(2, 2)]
        layers += [Dense(hidden), ReLU(), Dense(len(registry)), Sigmoid()]
    meta = {"role": "ftr", "k": k, "registry": list(registry), "p_dnn": p_dnn}
    return FileTypeModel(LayerGraph(layers, (k, 1), init_seed, meta), registry)


def _noisy_batch_hook(p: float, seed: int, clean_targets: bool):
    """Per-batch hook: fresh BSC noise for every batch, substream = step."""

    def hook(xb, yb, step):
        flips = streams.stream_rng(seed, step, streams.TRAIN_NOISE).random(xb.shape) < p
        noisy = network_input(xb ^ flips.astype(np.uint8))[..., None]
        return noisy, (xb if clean_targets else yb)

    return hook


def _stack_bits(segments: Sequence[BitSegment], k: int) -> np.ndarray:
    if not segments:
        raise ValueError("nessun segmento di training")
    for s in segments:
        if len(s) != k:
            raise LengthMismatchError("segmento di training", k, len(s))
    return np.stack([s.bits for s in segments])


def train_ftr(
    ftr: FileTypeModel,
    segments: Sequence[BitSegment],
    p: float,
    epochs: int = 10,
    batch_size: int = 32,
    seed: int = 0,
    epsilon: float = 1e-6,
) -> TrainResult:
    """Train on labeled clean segments, each batch with its own error pattern."""

    index = {name: i for i, name in enumerate(ftr.registry)}
    unknown = sorted({s.file_type for s in segments} - set(index), key=str)
    if unknown:
        raise ValueError(f"tipi di file non presenti nel registro: {unknown}")
    x = _stack_bits(segments, ftr.k)
    labels = np.array([index[s.file_type] for s in segments], dtype=np.int64)
    result = train(
        ftr.model, (x, labels), loss="cross_entropy", batch_size=batch_size, epochs=epochs,
        seed=seed, optimizer=AdaDeltaState(epsilon=epsilon),
        batch_hook=_noisy_batch_hook(p, seed, clean_targets=False),
    )
    ftr.model.metadata["p_dnn"] = float(p)
    log.info("FTR addestrato: %d passi, loss finale %.4f", len(result.history), result.final_loss)
    return result


@dataclass(frozen=True)
class FtrAccuracy:
    ber: float
    file_type: str
    segments: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.segments if self.segments else 0.0


def ftr_accuracy_table(
    ftr: FileTypeModel,
    segments: Sequence[BitSegment],
    bers: Iterable[float],
    seed: int,
) -> list[FtrAccuracy]:
    """Accuracy per BER and type (plus an ``all`` row), segment j noised by substream j."""

    rows: list[FtrAccuracy] = []
    for ber in bers:
        correct: dict[str, int] = {t: 0 for t in ftr.registry}
        total: dict[str, int] = {t: 0 for t in ftr.registry}
        for j, seg in enumerate(segments):
            noisy = seg.bits ^ noise_mask(len(seg), ChannelSpec(ber, seed, j))
            idx, _ = ftr_classify(noisy, ftr)
            total[seg.file_type] = total.get(seg.file_type, 0) + 1
            correct[seg.file_type] = correct.get(seg.file_type, 0) + int(ftr.registry[idx] == seg.file_type)
        for t in total:
            rows.append(FtrAccuracy(ber, t, total[t], correct[t]))
        rows.append(FtrAccuracy(ber, "all", sum(total.values()), sum(correct.values())))
    return rows


###############################################################################
# Neural soft decoders
###############################################################################


def build_soft_decoder_model(
    k: int,
    depth: int = 2,
    filters: int = 16,
    width: int = 5,
    init_seed: int = 0,
    layer_spec: Optional[str] = None,
    file_type: Optional[str] = None,
    p_dnn: Optional[float] = None,
) -> LayerGraph:
    """``depth`` valid convs, then deconvs back to length k and one sigmoid per bit."""

    if layer_spec:
        layers = parse_layer_spec(layer_spec)
    else:
        if k < depth * (width - 1) + 1:
            raise ArchitectureError(f"{depth} conv di larghezza {width} su k={k}")
        layers = []
        for _ in range(depth):
            layers += [Conv1D(filters, width), ReLU()]
        for _ in range(depth - 1):
            layers += [Deconv1D(filters, width), ReLU()]
        layers += [Deconv1D(1, width), Sigmoid()]
    meta = {"role": "softdec", "k": k, "file_type": file_type, "p_dnn": p_dnn}
    model = LayerGraph(layers, (k, 1), init_seed, meta)
    if model.output_shape != (k, 1):
        raise ArchitectureError(f"il decoder produce {model.output_shape} invece di {(k, 1)}")
    return model


def neural_soft_decode(noisy, model: LayerGraph, p: float = 0.0) -> SoftPosterior:
    """Per-bit sigmoid outputs of a conv-deconv model, clipped."""

    bits = as_bits(noisy)
    if bits.size != model.input_shape[0]:
        raise LengthMismatchError("segmento per il decoder neurale", model.input_shape[0], bits.size)
    return clip_posterior(model.predict(network_input(bits)[None, :, None])[0, :, 0])


def train_soft_decoder(
    model: LayerGraph,
    segments: Sequence[BitSegment],
    p_dnn: float,
    epochs: int = 10,
    batch_size: int = 32,
    seed: int = 0,
    epsilon: float = 1e-6,
) -> TrainResult:
    """Doubling-rate training on clean windows noised per batch at ``p_dnn``."""

    x = _stack_bits(segments, model.input_shape[0])
    result = train(
        model, (x, x), loss="doubling_rate", batch_size=batch_size, epochs=epochs,
        seed=seed, optimizer=AdaDeltaState(epsilon=epsilon),
        batch_hook=_noisy_batch_hook(p_dnn, seed, clean_targets=True),
    )
    model.metadata["p_dnn"] = float(p_dnn)
    log.info("Decoder soft addestrato: %d passi, loss finale %.4f", len(result.history), result.final_loss)
    return result


def window_starts(k: int, window: int) -> list[int]:
    """Non-overlapping windows plus an end-aligned last one when k % window != 0."""

    if k < window:
        raise LengthMismatchError("segmento più corto della finestra del decoder", window, k)
    starts = list(range(0, k - window + 1, window))
    if starts[-1] + window < k:
        starts.append(k - window)
    return starts


@dataclass
class NeuralSoftDecoder:
    model: LayerGraph
    file_type: Optional[str] = None
    p_dnn: Optional[float] = None

    def __post_init__(self):
        if self.file_type is None:
            self.file_type = self.model.metadata.get("file_type")
        if self.p_dnn is None:
            self.p_dnn = self.model.metadata.get("p_dnn")

    @property
    def window(self) -> int:
        return self.model.input_shape[0]

    def decode(self, noisy, p: float) -> SoftPosterior:
        bits = as_bits(noisy)
        starts = window_starts(bits.size, self.window)
        batch = np.stack([bits[s:s + self.window] for s in starts])
        out = self.model.predict(network_input(batch)[..., None])[..., 0]
        q = np.empty(bits.size)
        covered = 0
        for s, row in zip(starts, out):
            q[covered:s + self.window] = row[covered - s:]
            covered = s + self.window
        return clip_posterior(q)


###############################################################################
# Markov source and forward-backward oracle
###############################################################################


@dataclass(frozen=True)
class MarkovSource:
    """Binary source where Pr{x_i = 1} depends on the previous ``order`` bits.

    ``table[s]`` is that probability for history ``s`` (most recent bit in
    the least significant position). ``initial`` is the distribution of the
    history before the first bit; by default the stationary one.
    """

    order: int
    table: tuple
    initial: Optional[tuple] = None

    def __post_init__(self):
        if self.order < 0:
            raise ValueError(f"ordine negativo: {self.order}")
        if (1 << max(self.order, 1)) > MAX_STATES:
            raise ValueError(f"ordine {self.order} oltre il limite di {MAX_STATES} stati")
        table = tuple(float(t) for t in self.table)
        if len(table) != 1 << self.order:
            raise ValueError(f"la tabella deve avere {1 << self.order} voci, ne ha {len(table)}")
        if any(not 0.0 <= t <= 1.0 for t in table):
            raise ValueError("probabilità condizionate fuori da [0, 1]")
        object.__setattr__(self, "table", table)
        if self.initial is not None:
            init = np.asarray(self.initial, dtype=np.float64)
            if init.size != self.states or np.any(init < 0) or not np.isclose(init.sum(), 1.0):
                raise ValueError(f"distribuzione iniziale non valida su {self.states} stati")
            object.__setattr__(self, "initial", tuple(init / init.sum()))

    @classmethod
    def from_spec(cls, spec: str) -> "MarkovSource":
        """Parse ``"m:t0,t1,..."``, e.g. ``"1:0.02,0.98"``."""
        try:
            head, _, body = spec.partition(":")
            order = int(head)
            table = [float(t) for t in body.split(",") if t.strip()]
        except ValueError:
            raise ValueError(f"sorgente di Markov non valida: {spec!r}") from None
        return cls(order, tuple(table))

    def to_spec(self) -> str:
        return f"{self.order}:" + ",".join(repr(t) for t in self.table)

    @property
    def width(self) -> int:
        """History bits carried in the state; at least 1 so the state holds x_i."""
        return max(self.order, 1)

    @property
    def states(self) -> int:
        return 1 << self.width

    @cached_property
    def _state_table(self) -> np.ndarray:
        s = np.arange(self.states)
        return np.asarray(self.table)[s & ((1 << self.order) - 1)]

    @cached_property
    def _successors(self) -> tuple[np.ndarray, np.ndarray]:
        s = np.arange(self.states)
        mask = self.states - 1
        return (s << 1) & mask, ((s << 1) | 1) & mask

    def step(self, dist: np.ndarray) -> np.ndarray:
        """Push a state distribution one bit forward."""
        t = self._state_table
        succ0, succ1 = self._successors
        return (np.bincount(succ0, dist * (1.0 - t), self.states)
                + np.bincount(succ1, dist * t, self.states))

    @cached_property
    def _initial(self) -> np.ndarray:
        if self.initial is not None:
            return np.asarray(self.initial)
        # lazy power iteration, converges for periodic chains too
        dist = np.full(self.states, 1.0 / self.states)
        for _ in range(10_000):
            nxt = 0.5 * dist + 0.5 * self.step(dist)
            if np.max(np.abs(nxt - dist)) < 1e-15:
                dist = nxt
                break
            dist = nxt
        return dist / dist.sum()

    def initial_distribution(self) -> np.ndarray:
        return self._initial.copy()

    def sample(self, count: int, k: int, seed: int, stream_id: int = 0) -> np.ndarray:
        """``count`` independent sequences of k bits, shape (count, k)."""

        rng = streams.stream_rng(seed, stream_id, streams.SOURCE)
        state = rng.choice(self.states, size=count, p=self._initial)
        u = rng.random((count, k))
        t = self._state_table
        mask = self.states - 1
        out = np.empty((count, k), dtype=np.uint8)
        for i in range(k):
            x = (u[:, i] < t[state]).astype(np.int64)
            out[:, i] = x
            state = ((state << 1) | x) & mask
        return out


def sample_segments(source: MarkovSource, count: int, k: int, seed: int, file_type: str = "markov") -> list[BitSegment]:
    bits = source.sample(count, k, seed)
    origin = f"markov:{source.to_spec()}"
    return [BitSegment(row, file_type, origin, j * k) for j, row in enumerate(bits)]


def markov_oracle_decode(noisy, source: MarkovSource, p: float, extrinsic: bool = False, clip: bool = True) -> SoftPosterior:
    """Exact q_i = Pr{x_i = 1 | y, p} by scaled forward-backward over histories.

    With ``extrinsic`` the emission factor of y_i itself is left out, giving
    Pr{x_i = 1 | y_j, j != i}.
    """

    y = as_bits(noisy)
    if not 0.0 < p <= 0.5:
        raise ValueError(f"p deve stare in (0, 0.5], ricevuto {p}")
    k, S = y.size, source.states
    if k == 0:
        return np.zeros(0)
    t = source._state_table
    succ0, succ1 = source._successors
    state_bit = np.arange(S) & 1
    emit = np.where(state_bit[None, :] == y[:, None], 1.0 - p, p)  # (k, S)

    alpha = np.empty((k, S))
    dist = source._initial
    for i in range(k):
        a = source.step(dist) * emit[i]
        dist = a / a.sum()
        alpha[i] = dist

    q = np.empty(k)
    beta = np.ones(S)
    for i in range(k - 1, -1, -1):
        post = alpha[i] * beta
        if extrinsic:
            post = post / emit[i]
        q[i] = post[state_bit == 1].sum() / post.sum()
        eb = emit[i] * beta
        beta = (1.0 - t) * eb[succ0] + t * eb[succ1]
        beta /= beta.sum()
    return clip_posterior(q) if clip else q


@dataclass
class OracleSoftDecoder:
    source: MarkovSource
    file_type: Optional[str] = None
    extrinsic: bool = False
    p_dnn: Optional[float] = field(default=None, init=False)

    def decode(self, noisy, p: float) -> SoftPosterior:
        # the oracle needs p in (0, 0.5]; a noiseless channel is treated as nearly noiseless
        return markov_oracle_decode(noisy, self.source, min(max(p, PROB_EPS), 0.5), self.extrinsic)


###############################################################################
# Fusion
###############################################################################


def posterior_llrs(posterior) -> np.ndarray:
    q = clip_posterior(posterior)
    return np.log((1.0 - q) / q)


def llr_fusion(channel_llrs, posterior) -> np.ndarray:
    """Add ln((1-q_i)/q_i) to the first k channel LLRs; parity LLRs pass through."""

    llr = np.asarray(channel_llrs, dtype=np.float64)
    q = np.asarray(posterior, dtype=np.float64)
    if llr.ndim != 1 or q.ndim != 1:
        raise ValueError("LLR e posterior devono essere vettori")
    if q.size > llr.size:
        raise LengthMismatchError("posterior più lungo della parola di codice", llr.size, q.size)
    out = llr.copy()
    out[:q.size] += posterior_llrs(q)
    return np.clip(out, -LLR_MAX, LLR_MAX)
