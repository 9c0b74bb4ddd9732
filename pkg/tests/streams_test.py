import numpy as np
import pytest

from src import streams
from src.utils import (
    BitSegment,
    LengthMismatchError,
    as_bits,
    bits_to_str,
    bytes_to_bits,
    format_ber,
    parse_ber,
    parse_ber_list,
)


def test_same_key_same_stream():
    a = streams.stream_rng(5, 3, streams.NOISE).random(100)
    b = streams.stream_rng(5, 3, streams.NOISE).random(100)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("other", [(6, 3, streams.NOISE), (5, 4, streams.NOISE), (5, 3, streams.INIT)])
def test_any_key_change_gives_new_stream(other):
    a = streams.stream_rng(5, 3, streams.NOISE).random(100)
    b = streams.stream_rng(*other).random(100)
    assert not np.array_equal(a, b)


def test_derive_key_length():
    assert len(streams.derive_key(0, 0, streams.NOISE)) == 16
    assert streams.derive_key(1, 2, streams.SPLIT) == streams.derive_key(1, 2, streams.SPLIT)


def test_bytes_to_bits_msb_first():
    assert bits_to_str(bytes_to_bits(b"\xa5")) == "10100101"
    assert bytes_to_bits(b"hello").size == 40


def test_as_bits_rejects_non_binary():
    with pytest.raises(ValueError):
        as_bits([0, 2])
    with pytest.raises(ValueError):
        as_bits([[0, 1]])
    assert as_bits([True, False]).dtype == np.uint8


@pytest.mark.parametrize("text, value", [
    ("0.008", 0.008),
    ("0.8%", 0.008),
    ("1.2%", 0.012),
    (0.5, 0.5),
])
def test_parse_ber(text, value):
    assert parse_ber(text) == value


@pytest.mark.parametrize("text", ["abc", "2", "-0.1", "%"])
def test_parse_ber_rejects(text):
    with pytest.raises(ValueError):
        parse_ber(text)


def test_parse_ber_list_and_format():
    assert parse_ber_list("0.2%,0.004, 0.8%") == [0.002, 0.004, 0.008]
    assert format_ber(0.008) == "0.008"


def test_bit_segment_is_frozen_and_hashable():
    seg = BitSegment([1, 0, 1, 1], file_type="html", origin="a.html", offset=8)
    assert len(seg) == 4
    with pytest.raises(ValueError):
        seg.bits[0] = 0
    same = BitSegment(np.array([1, 0, 1, 1], dtype=np.uint8), "html", "a.html", 8)
    assert seg == same and hash(seg) == hash(same)
    assert seg.digest() == same.digest()
    assert seg.digest() != BitSegment([1, 0, 1, 0]).digest()


def test_length_mismatch_message():
    err = LengthMismatchError("noisy word", 6, 5)
    assert str(err) == "noisy word: expected length 6, received 5"
    assert isinstance(err, ValueError)
