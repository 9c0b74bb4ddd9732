# -*- coding: utf-8 -*-

"""Learning binary channel transition probabilities by betting.

A channel maps an input symbol ``i`` (0-based, ``0 <= i < K``) to a bit that
is 1 with unknown probability ``p_i``. A small network bets a fraction
``q_i`` of its wealth on the outcome 1; minimizing the negative doubling
rate drives ``q_i`` to ``p_i`` without counting per-symbol frequencies.
The quality of the estimate is the average KL divergence Δ_K.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import streams
from .tensor_nn import AdaDeltaState, Dense, LayerGraph, ReLU, Sigmoid, train
from .utils import PROB_EPS

log = logging.getLogger(__name__)

PAIRS_PER_SYMBOL = 50_000
BATCH_PER_SYMBOL = 50
DEFAULT_EPOCHS = 3
DEFAULT_EPSILON = 1e-6
_CHUNK = 1 << 16


@dataclass(frozen=True)
class SyntheticChannel:
    K: int
    probs: tuple
    seed: int = 0

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if self.K < 1:
            raise ValueError(f"K deve essere >= 1, ricevuto {self.K}")
        if len(probs) != self.K:
            raise ValueError(f"servono {self.K} probabilità, ricevute {len(probs)}")
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("probabilità di transizione fuori da [0, 1]")
        object.__setattr__(self, "probs", probs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=np.float64)


@dataclass(frozen=True)
class PairDataset:
    """N channel input/output pairs: ``symbols[j]`` in [0, K), ``bits[j]`` in {0, 1}."""

    K: int
    symbols: np.ndarray
    bits: np.ndarray

    def __post_init__(self):
        if self.symbols.shape != self.bits.shape or self.symbols.ndim != 1:
            raise ValueError("simboli e bit devono essere vettori della stessa lunghezza")
        if self.symbols.size and (self.symbols.min() < 0 or self.symbols.max() >= self.K):
            raise ValueError(f"indice di simbolo fuori da [0, {self.K})")

    @property
    def N(self) -> int:
        return int(self.symbols.size)

    def empirical_frequencies(self) -> np.ndarray:
        """Per-symbol bit-1 frequency (NaN for absent symbols)."""
        counts = np.bincount(self.symbols, minlength=self.K).astype(np.float64)
        ones = np.bincount(self.symbols, weights=self.bits, minlength=self.K)
        with np.errstate(invalid="ignore", divide="ignore"):
            return ones / counts


def sample_channel(K: int, seed: int, stream_id: int = 0) -> SyntheticChannel:
    """Draw p_1..p_K i.i.d. uniform on (0, 1)."""

    if K < 1:
        raise ValueError(f"K deve essere >= 1, ricevuto {K}")
    probs = streams.stream_rng(seed, stream_id, streams.CHANNEL).random(K)
    probs[probs == 0.0] = PROB_EPS
    return SyntheticChannel(K, tuple(probs), seed)


def _pair_chunk(ch_probs: np.ndarray, size: int, seed: int, stream_id: int):
    rng = streams.stream_rng(seed, stream_id, streams.PAIRS)
    symbols = rng.integers(0, ch_probs.size, size=size)
    bits = (rng.random(size) < ch_probs[symbols]).astype(np.uint8)
    return symbols, bits


def generate_pairs(ch: SyntheticChannel, N: int, seed: int, stream_offset: int = 0, workers: int = 4) -> PairDataset:
    """N pairs with uniform symbols; chunk ``c`` uses substream ``stream_offset + c``."""

    if N < 1:
        raise ValueError(f"N deve essere >= 1, ricevuto {N}")
    probs = ch.as_array()
    sizes = [min(_CHUNK, N - start) for start in range(0, N, _CHUNK)]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        parts = list(pool.map(
            lambda c: _pair_chunk(probs, sizes[c], seed, stream_offset + c), range(len(sizes))
        ))
    return PairDataset(ch.K, np.concatenate([s for s, _ in parts]), np.concatenate([b for _, b in parts]))


def build_estimator_model(K: int, init_seed: int = 0) -> LayerGraph:
    """One-hot(K) -> Dense(K) -> ReLU -> Dense(1) -> Sigmoid.

    Hidden biases start at 1 so that no ReLU unit is dead at init.
    """

    layers = [Dense(K, bias_init=1.0), ReLU(), Dense(1), Sigmoid()]
    return LayerGraph(layers, (K,), init_seed, metadata={"role": "estimator", "K": K})


def estimator_probabilities(model: LayerGraph) -> np.ndarray:
    K = model.input_shape[0]
    return model.predict(np.eye(K))[:, 0]


def train_estimator(
    data: PairDataset,
    K: Optional[int] = None,
    epochs: int = DEFAULT_EPOCHS,
    batch_size: Optional[int] = None,
    seed: int = 0,
    epsilon: float = DEFAULT_EPSILON,
) -> np.ndarray:
    """Train the betting network on *data* and return q_1..q_K.

    A symbol fills about 1/K of each batch, so the batch-mean gradient on its
    one-hot row shrinks like 1/K. The gradient is multiplied by K to keep
    every row above the AdaDelta epsilon floor, where the step size no longer
    depends on the gradient magnitude.
    """

    K = data.K if K is None else int(K)
    if K != data.K:
        raise ValueError(f"K={K} ma il dataset ha K={data.K}")
    missing = np.flatnonzero(np.bincount(data.symbols, minlength=K) == 0)
    if missing.size:
        raise ValueError(f"simboli assenti dal dataset: {missing[:10].tolist()}")

    eye = np.eye(K)

    def one_hot(xb, yb, step):
        return eye[xb], yb

    model = build_estimator_model(K, seed)
    result = train(
        model,
        (data.symbols, data.bits),
        loss="doubling_rate",
        batch_size=batch_size or K * BATCH_PER_SYMBOL,
        epochs=epochs,
        seed=seed,
        optimizer=AdaDeltaState(epsilon=epsilon),
        batch_hook=one_hot,
        grad_scale=float(K),
    )
    log.debug("K=%d: %d passi, loss finale %.6f", K, len(result.history), result.final_loss)
    return estimator_probabilities(model)


def kl_divergence(p, q) -> np.ndarray:
    """D(p||q) in bits for Bernoulli pairs, probabilities clipped to [eps, 1-eps]."""

    p = np.clip(np.asarray(p, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    q = np.clip(np.asarray(q, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    return p * np.log2(p / q) + (1.0 - p) * np.log2((1.0 - p) / (1.0 - q))


def kl_report(truth: SyntheticChannel, q) -> float:
    """Δ_K = (1/K) Σ_i D(p_i || q_i)."""

    q = np.asarray(q, dtype=np.float64)
    if q.size != truth.K:
        raise ValueError(f"servono {truth.K} stime, ricevute {q.size}")
    return float(np.mean(kl_divergence(truth.as_array(), q)))


def doubling_rate(q, data: PairDataset) -> float:
    """(1/N) Σ_j [b_j log2 q_{x_j} + (1 - b_j) log2(1 - q_{x_j})].

    The payoff constant is left out, so the uniform bettor scores -1.
    """

    q = np.clip(np.asarray(q, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    qx = q[data.symbols]
    b = data.bits.astype(np.float64)
    return float(np.mean(b * np.log2(qx) + (1.0 - b) * np.log2(1.0 - qx)))


@dataclass(frozen=True)
class TransitionEstimate:
    K: int
    N: int
    delta_K: float
    wall_seconds: float


def transition_experiment(
    Ks: Iterable[int],
    seed: int,
    pairs_per_symbol: int = PAIRS_PER_SYMBOL,
    epochs: int = DEFAULT_EPOCHS,
    out: Optional[Path] = None,
) -> list[TransitionEstimate]:
    """Estimate Δ_K for each K; optionally write ``K,N,delta_K,wall_seconds`` CSV."""

    rows: list[TransitionEstimate] = []
    for K in Ks:
        start = time.perf_counter()
        ch = sample_channel(K, seed, stream_id=K)
        n = K * pairs_per_symbol
        data = generate_pairs(ch, n, seed, stream_offset=K << 32)
        q = train_estimator(data, K, epochs=epochs, seed=seed)
        delta = kl_report(ch, q)
        wall = time.perf_counter() - start
        log.info("K=%d N=%d: delta_K=%.6g (%.1f s)", K, n, delta, wall)
        rows.append(TransitionEstimate(K, n, delta, wall))
    if out is not None:
        write_transition_report(rows, out)
    return rows


def write_transition_report(rows: Sequence[TransitionEstimate], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["K", "N", "delta_K", "wall_seconds"])
        for r in rows:
            w.writerow([r.K, r.N, repr(r.delta_K), f"{r.wall_seconds:.3f}"])
    return path
