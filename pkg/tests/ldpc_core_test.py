import itertools

import numpy as np
import pytest

from src import ldpc_core
from src.ldpc_core import (
    AlistFormatError,
    ParityCheckCode,
    bp_decode,
    check_messages,
    dump_alist,
    encode,
    gallager_code,
    load_alist,
    load_code,
    syndrome,
)
from src.utils import LLR_MAX, LengthMismatchError

SMALL_ALIST = """\
6 3
2 3
2 2 2 1 1 1
3 3 3
1 3
1 2
2 3
1 0
2 0
3 0
1 2 4
2 3 5
1 3 6
"""

SMALL_H = np.array([
    [1, 1, 0, 1, 0, 0],
    [0, 1, 1, 0, 1, 0],
    [1, 0, 1, 0, 0, 1],
], dtype=np.uint8)


@pytest.fixture(scope="module")
def small_code():
    return load_alist(SMALL_ALIST, source="small")


@pytest.fixture(scope="module")
def desk_code():
    return gallager_code(96, 3, 6, seed=1)


def test_load_small_alist(small_code):
    assert (small_code.n, small_code.k, small_code.m) == (6, 3, 3)
    assert small_code.col_perm == (0, 1, 2, 3, 4, 5)
    assert small_code.dropped_rows == 0
    h = small_code.parity_matrix()
    assert np.array_equal(h[:, 3:], np.eye(3, dtype=np.uint8))
    assert np.array_equal(small_code.native_matrix(), SMALL_H)


def test_unpadded_alist_is_accepted():
    text = "6 3\n2 3\n2 2 2 1 1 1\n3 3 3\n1 3\n1 2\n2 3\n1\n2\n3\n"
    code = load_alist(text)
    assert code.k == 3
    assert np.array_equal(code.native_matrix(), SMALL_H)


def test_identity_alist():
    code = load_alist("3 3\n1 1\n1 1 1\n1 1 1\n1\n2\n3\n1\n2\n3\n")
    assert (code.n, code.k) == (3, 0)
    assert code.col_perm == (0, 1, 2)
    assert np.array_equal(encode(np.zeros(0, dtype=np.uint8), code), np.zeros(3))


@pytest.mark.parametrize("text", [
    # check index 4 in a column list, m = 3
    "6 3\n2 3\n2 2 2 1 1 1\n3 3 3\n1 4\n1 2\n2 3\n1 0\n2 0\n3 0\n",
    # column index n+1 in a row list
    "6 3\n2 3\n2 2 2 1 1 1\n3 3 3\n1 3\n1 2\n2 3\n1 0\n2 0\n3 0\n1 2 7\n2 3 5\n1 3 6\n",
])
def test_index_out_of_range(text):
    with pytest.raises(AlistFormatError, match="index out of range"):
        load_alist(text)


@pytest.mark.parametrize("text", [
    "",
    "6\n2 3\n",
    "6 3\n2 3\n2 2 2 1 1\n3 3 3\n",
    "6 3\n2 3\n2 2 2 1 1 1\n3 3 3\n1 1\n1 2\n2 3\n1 0\n2 0\n3 0\n",
    "6 3\n2 3\n2 2 2 1 1 1\n3 3 3\n1 3\n1 2\n2 3\n1 0\n2 0\n3 0\n1 2 5\n2 3 4\n1 3 6\n",
])
def test_malformed_alist(text):
    with pytest.raises(AlistFormatError):
        load_alist(text)


def test_dependent_row_is_dropped():
    rows = [[0, 1, 3], [1, 2, 4], [0, 2, 3, 4]]  # third = first xor second
    code = ParityCheckCode.from_rows(6, rows)
    assert code.dropped_rows == 1
    assert code.k == 4
    assert len(code.rows) == 2


def test_from_rows_rejects_duplicates():
    with pytest.raises(ValueError):
        ParityCheckCode.from_rows(4, [[0, 0, 1]])


def test_systematic_form_has_identity_tail(desk_code):
    h = desk_code.parity_matrix()
    m = desk_code.m
    # [P | I] up to row operations: H times every encoded word vanishes and the
    # parity part of P's image matches.
    assert h.shape == (m, desk_code.n)
    p = desk_code.parity_generator
    assert p.shape == (m, desk_code.k)
    g = np.concatenate((np.eye(desk_code.k, dtype=np.int64), p.T.astype(np.int64)), axis=1)
    assert not np.any((h.astype(np.int64) @ g.T) % 2)


def test_encode_small(small_code):
    assert np.array_equal(encode([1, 0, 1], small_code), [1, 0, 1, 1, 1, 0])
    assert not np.any(encode([0, 0, 0], small_code))


def test_encode_length_mismatch(small_code):
    with pytest.raises(LengthMismatchError):
        encode([1, 0], small_code)


def test_syndrome_of_single_flip_is_column(small_code):
    cw = encode([1, 0, 1], small_code)
    h = small_code.parity_matrix()
    for i in range(6):
        word = cw.copy()
        word[i] ^= 1
        assert np.array_equal(syndrome(small_code, word), h[:, i])
    assert not np.any(syndrome(small_code, np.zeros(6, dtype=np.uint8)))


def test_encode_properties(desk_code):
    rng = np.random.default_rng(7)
    us = rng.integers(0, 2, size=(10_000, desk_code.k), dtype=np.uint8)
    for u in us:
        assert not np.any(syndrome(desk_code, encode(u, desk_code)))
    u, v = us[0], us[1]
    assert np.array_equal(encode(u ^ v, desk_code), encode(u, desk_code) ^ encode(v, desk_code))


def test_permute_round_trip(desk_code):
    rng = np.random.default_rng(3)
    word = rng.integers(0, 2, desk_code.n)
    assert np.array_equal(desk_code.unpermute(desk_code.permute(word)), word)
    assert np.array_equal(desk_code.permute(desk_code.unpermute(word)), word)


def test_gallager_is_regular_and_seeded(desk_code):
    again = gallager_code(96, 3, 6, seed=1)
    assert again.rows == desk_code.rows
    h = desk_code.native_matrix()
    assert np.all(h.sum(axis=1) == 6)
    assert np.all(h.sum(axis=0) <= 3)
    assert gallager_code(96, 3, 6, seed=2).rows != desk_code.rows


def test_gallager_rejects_bad_parameters():
    with pytest.raises(ValueError):
        gallager_code(10, 3, 7)


def test_alist_round_trip(desk_code):
    code = load_alist(dump_alist(desk_code))
    assert code.rows == desk_code.rows
    assert code.col_perm == desk_code.col_perm


def test_load_code_refs(tmp_path, small_code):
    path = tmp_path / "small.alist"
    path.write_text(SMALL_ALIST)
    assert load_code(str(path)).rows == small_code.rows
    assert load_code(f"alist:{path}").rows == small_code.rows
    assert load_code("gallager:n=96,wc=3,wr=6,seed=1").k == gallager_code(96, 3, 6, 1).k
    with pytest.raises(ValueError):
        load_code("gallager:n=96,foo=1")


def test_bp_noiseless(desk_code):
    rng = np.random.default_rng(0)
    cw = encode(rng.integers(0, 2, desk_code.k), desk_code)
    llr = np.where(cw == 0, LLR_MAX, -LLR_MAX)
    res = bp_decode(llr, desk_code)
    assert res.converged and res.iterations == 0
    assert np.array_equal(res.codeword, cw)
    assert np.array_equal(res.info(desk_code.k), cw[:desk_code.k])


def test_bp_corrects_single_flip(small_code):
    cw = encode([1, 0, 1], small_code)
    l0 = np.log(0.95 / 0.05)
    for i in range(6):
        noisy = cw.copy()
        noisy[i] ^= 1
        res = bp_decode(np.where(noisy == 0, l0, -l0), small_code)
        assert res.converged
        assert np.array_equal(res.codeword, cw)


def test_bp_all_zero_llr_never_converges(small_code):
    res = bp_decode(np.zeros(6), small_code, max_iters=7)
    assert not res.converged
    assert res.iterations == 7


def test_bp_rejects_bad_input(small_code):
    with pytest.raises(ValueError):
        bp_decode(np.zeros(6), small_code, max_iters=0)
    with pytest.raises(ValueError):
        bp_decode(np.array([np.nan] * 6), small_code)
    with pytest.raises(LengthMismatchError):
        bp_decode(np.zeros(5), small_code)


def test_bp_deterministic_and_valid_when_converged(desk_code):
    rng = np.random.default_rng(11)
    cw = encode(rng.integers(0, 2, desk_code.k), desk_code)
    flips = (rng.random(desk_code.n) < 0.03).astype(np.uint8)
    llr = np.where((cw ^ flips) == 0, 3.5, -3.5)
    a = bp_decode(llr, desk_code)
    b = bp_decode(llr, desk_code)
    assert np.array_equal(a.codeword, b.codeword) and a.iterations == b.iterations
    if a.converged:
        assert not np.any(syndrome(desk_code, a.codeword))


def test_bp_converged_words_are_codewords_small_codes(small_code):
    codewords = {tuple(encode(u, small_code)) for u in itertools.product([0, 1], repeat=3)}
    rng = np.random.default_rng(5)
    for _ in range(200):
        res = bp_decode(rng.normal(0, 2, 6), small_code, max_iters=20)
        if res.converged:
            assert tuple(res.codeword) in codewords


def test_default_iterations():
    assert ldpc_core.DEFAULT_MAX_ITERS == 50


def test_check_messages_stay_within_llr_max():
    # check 0 has one edge, check 1 has three
    v2c = np.array([5.0, 30.0, 30.0, -30.0])
    starts = np.array([0, 1])
    edge_chk = np.array([0, 1, 1, 1])
    c2v = check_messages(v2c, starts, edge_chk)
    assert c2v[0] == LLR_MAX
    assert np.all(np.abs(c2v) <= LLR_MAX)
    assert c2v[1] < 0 and c2v[2] < 0 and c2v[3] > 0


def test_check_messages_zero_input_silences_the_check():
    c2v = check_messages(np.array([0.0, 4.0, -2.0]), np.array([0]), np.array([0, 0, 0]))
    assert c2v[1] == 0.0 and c2v[2] == 0.0
    assert c2v[0] != 0.0
