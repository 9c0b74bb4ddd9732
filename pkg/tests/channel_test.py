import math

import numpy as np
import pytest

from src.channel import ChannelSpec, bsc_transmit, channel_llr, channel_llrs, noise_mask
from src.utils import LLR_MAX


def test_p_zero_is_identity():
    word = np.random.default_rng(0).integers(0, 2, 500).astype(np.uint8)
    assert np.array_equal(bsc_transmit(word, ChannelSpec(0.0, seed=1)), word)


def test_p_one_is_complement():
    word = np.random.default_rng(0).integers(0, 2, 500).astype(np.uint8)
    assert np.array_equal(bsc_transmit(word, ChannelSpec(1.0, seed=1)), 1 - word)


def test_flip_rate_concentrates():
    n, p = 1_000_000, 0.01
    flips = noise_mask(n, ChannelSpec(p, seed=42, stream_id=3)).mean()
    assert abs(flips - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_noise_is_reproducible_and_word_independent():
    spec = ChannelSpec(0.1, seed=9, stream_id=17)
    zeros = np.zeros(1000, dtype=np.uint8)
    ones = np.ones(1000, dtype=np.uint8)
    assert np.array_equal(bsc_transmit(zeros, spec), bsc_transmit(zeros, spec))
    assert np.array_equal(bsc_transmit(zeros, spec), 1 - bsc_transmit(ones, spec))
    other = ChannelSpec(0.1, seed=9, stream_id=18)
    assert not np.array_equal(noise_mask(1000, spec), noise_mask(1000, other))


def test_cascade_matches_combined_crossover():
    n, p, q = 400_000, 0.05, 0.1
    word = np.zeros(n, dtype=np.uint8)
    twice = bsc_transmit(bsc_transmit(word, ChannelSpec(p, 1, 0)), ChannelSpec(q, 1, 1))
    combined = p + q - 2 * p * q
    assert abs(twice.mean() - combined) < 4 * math.sqrt(combined * (1 - combined) / n)


@pytest.mark.parametrize("p", [-0.1, 1.5, float("nan")])
def test_invalid_crossover(p):
    with pytest.raises(ValueError):
        ChannelSpec(p)


def test_channel_llr_examples():
    assert channel_llr(0, 0.5).value == 0.0
    assert channel_llr(0, 0.2).value == pytest.approx(math.log(4), abs=1e-12)
    assert channel_llr(1, 0.2).value == pytest.approx(-math.log(4), abs=1e-12)
    assert not channel_llr(0, 0.2).saturated


def test_channel_llr_saturates():
    assert channel_llr(0, 0.0) == (LLR_MAX, True)
    assert channel_llr(1, 0.0) == (-LLR_MAX, True)
    assert channel_llr(0, 1.0) == (-LLR_MAX, True)
    assert channel_llr(0, 1e-20).saturated


def test_channel_llr_antisymmetric_and_monotone():
    ps = np.linspace(0.001, 0.499, 200)
    values = [channel_llr(0, p).value for p in ps]
    for p, v in zip(ps, values):
        assert channel_llr(1, p).value == -v
    assert all(a > b for a, b in zip(values, values[1:]))


def test_channel_llrs_vector():
    out = channel_llrs([0, 1, 1, 0], 0.2)
    assert np.allclose(out, np.log(4) * np.array([1, -1, -1, 1]))
    with pytest.raises(ValueError):
        channel_llr(2, 0.1)
