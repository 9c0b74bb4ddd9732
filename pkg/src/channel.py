# -*- coding: utf-8 -*-
"""Binary symmetric channel and its LLRs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import streams
from .utils import LLR_MAX, as_bits

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChannelSpec:
    """BSC of crossover probability ``p``; noise for one word comes from
    substream ``stream_id`` of ``seed``."""

    p: float
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if not 0.0 <= float(self.p) <= 1.0 or math.isnan(float(self.p)):
            raise ValueError(f"probabilità di crossover fuori da [0, 1]: {self.p}")


def noise_mask(length: int, spec: ChannelSpec) -> np.ndarray:
    """Error pattern of *length* bits (1 = flipped), independent of the word."""
    rng = streams.stream_rng(spec.seed, spec.stream_id, streams.NOISE)
    return (rng.random(length) < spec.p).astype(np.uint8)


def bsc_transmit(word, spec: ChannelSpec) -> np.ndarray:
    w = as_bits(word)
    return w ^ noise_mask(w.size, spec)


class ChannelLlr(NamedTuple):
    value: float
    saturated: bool


def channel_llr(bit: int, p: float) -> ChannelLlr:
    """ln((1-p)/p) for a received 0, ln(p/(1-p)) for a received 1.

    p = 0 or p = 1 give the saturated value ±LLR_MAX with ``saturated`` set.
    """

    if bit not in (0, 1):
        raise ValueError(f"bit non valido: {bit!r}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probabilità fuori da [0, 1]: {p}")
    sign = 1.0 if bit == 0 else -1.0
    if p == 0.0:
        return ChannelLlr(sign * LLR_MAX, True)
    if p == 1.0:
        return ChannelLlr(-sign * LLR_MAX, True)
    value = sign * math.log((1.0 - p) / p)
    if abs(value) > LLR_MAX:
        return ChannelLlr(math.copysign(LLR_MAX, value), True)
    return ChannelLlr(value, False)


def channel_llrs(word, p: float) -> np.ndarray:
    """Vector form of :func:`channel_llr` for a received word."""

    w = as_bits(word)
    magnitude, saturated = channel_llr(0, p)
    if saturated:
        log.debug("LLR di canale saturato a %.1f per p=%r", LLR_MAX, p)
    return np.where(w == 0, magnitude, -magnitude).astype(np.float64)
