# -*- coding: utf-8 -*-

"""Seeded random substreams.

Every random draw in the toolkit (channel noise, weight init, shuffles,
synthetic data, code construction) comes from a generator keyed by
``(seed, stream_id, context)``: HKDF-SHA256 turns the triple into a key
for a counter-based Philox generator. Streams with different ids are
independent, so trials can run in any order or in parallel and still
reproduce bit for bit.
"""

from __future__ import annotations

import numpy as np
from Cryptodome.Hash import SHA256
from Cryptodome.Protocol.KDF import HKDF

NOISE = b"BSC-NOISE\0"
INIT = b"NN-INIT\0"
SHUFFLE = b"NN-SHUFFLE\0"
TRAIN_NOISE = b"TRAIN-NOISE\0"
PAIRS = b"PAIRS\0"
CHANNEL = b"CHANNEL\0"
SPLIT = b"SPLIT\0"
CODE = b"GALLAGER\0"
SOURCE = b"SOURCE\0"

_MASK64 = (1 << 64) - 1


def derive_key(seed: int, stream_id: int, context: bytes) -> bytes:
    """Derive a 16-byte key for substream *stream_id* of *seed*."""

    master = (int(seed) & _MASK64).to_bytes(8, "little")
    salt = (int(stream_id) & _MASK64).to_bytes(8, "little")
    return HKDF(master, 16, salt, SHA256, 1, context=context)


def stream_rng(seed: int, stream_id: int = 0, context: bytes = NOISE) -> np.random.Generator:
    """Return an independent Philox generator for ``(seed, stream_id, context)``."""

    key = int.from_bytes(derive_key(seed, stream_id, context), "little")
    return np.random.Generator(np.random.Philox(key=key))
