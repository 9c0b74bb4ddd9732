# -*- coding: utf-8 -*-

"""Systematic LDPC codes over GF(2).

Parsing of MacKay ``alist`` files, GF(2) Gaussian elimination to a
systematic form, encoding, syndromes and flooding sum-product belief
propagation in the LLR domain.

Codeword order
--------------
Every word handled by this module (encode output, syndrome and BP input,
BP output) is in *codeword order*: the k information bits first, then the
n-k parity bits. ``col_perm[j]`` is the column of the original (alist)
matrix stored at codeword position ``j``; ``permute``/``unpermute`` convert
between the two orders.
"""

from __future__ import annotations

import io
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence, TextIO, Union

import numpy as np

from . import streams
from .utils import LLR_MAX, LengthMismatchError, as_bits

log = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 50

# below this |tanh(m/2)| a message carries no sign information worth keeping
_TINY = 1e-300
# keeps arctanh finite; check messages are clamped to LLR_MAX afterwards
_ATANH_CAP = 1.0 - 1e-15


class AlistFormatError(ValueError):
    def __init__(self, reason: str, line: int | None = None):
        where = f" (riga {line})" if line is not None else ""
        super().__init__(f"alist non valido{where}: {reason}")


class RankDeficiencyError(ValueError):
    def __init__(self, n: int, m: int):
        super().__init__(
            f"Matrice di parità {m}x{n} senza righe indipendenti: impossibile ricavare una forma sistematica"
        )


###############################################################################
# Code object
###############################################################################


@dataclass(frozen=True)
class ParityCheckCode:
    """An (n, k) binary linear code given by a sparse parity-check matrix.

    ``rows`` holds the independent parity checks as column-index tuples in
    the original column numbering. ``parity_generator`` is the dense
    (n-k) x k matrix P such that the parity part of a codeword is P·u.
    Instances are immutable and safe to share between threads.
    """

    n: int
    k: int
    rows: tuple[tuple[int, ...], ...]
    col_perm: tuple[int, ...]
    parity_generator: np.ndarray = field(repr=False, compare=False)
    source: str = ""
    dropped_rows: int = 0

    @property
    def m(self) -> int:
        return self.n - self.k

    @property
    def rate(self) -> float:
        return self.k / self.n

    @classmethod
    def from_rows(cls, n: int, rows: Sequence[Sequence[int]], source: str = "") -> "ParityCheckCode":
        """Build a code from check rows, dropping dependent rows if needed."""

        if n < 1:
            raise ValueError(f"lunghezza del codice non valida: n={n}")
        clean: list[tuple[int, ...]] = []
        for j, row in enumerate(rows):
            idx = tuple(int(c) for c in row)
            if not idx:
                raise ValueError(f"riga di parità {j} vuota")
            if min(idx) < 0 or max(idx) >= n:
                raise ValueError(f"riga di parità {j}: index out of range [0, {n})")
            if len(set(idx)) != len(idx):
                raise ValueError(f"riga di parità {j}: indici duplicati")
            clean.append(tuple(sorted(idx)))
        if not clean:
            raise RankDeficiencyError(n, 0)

        h = np.zeros((len(clean), n), dtype=np.uint8)
        for j, idx in enumerate(clean):
            h[j, list(idx)] = 1

        # independent rows = pivot columns of H^T, scanned in row order
        _, kept = _gf2_eliminate(h.T, range(h.shape[0]))
        if not kept:
            raise RankDeficiencyError(n, len(clean))
        dropped = len(clean) - len(kept)
        if dropped:
            log.warning("%s: scartate %d righe di parità dipendenti", source or "codice", dropped)
        hk = h[kept]
        rank = len(kept)

        # pivots from the right so an H already shaped [P | I] keeps its order
        reduced, pivots = _gf2_eliminate(hk, range(n - 1, -1, -1))
        order = np.argsort(pivots)
        reduced = reduced[:rank][order]
        pivots_sorted = [pivots[i] for i in order]
        pivot_set = set(pivots_sorted)
        info_cols = [c for c in range(n) if c not in pivot_set]
        col_perm = tuple(info_cols + pivots_sorted)

        perm = np.asarray(col_perm)
        p_mat = np.ascontiguousarray(reduced[:, perm[: n - rank]])
        p_mat.setflags(write=False)
        return cls(
            n=n,
            k=n - rank,
            rows=tuple(clean[i] for i in kept),
            col_perm=col_perm,
            parity_generator=p_mat,
            source=source,
            dropped_rows=dropped,
        )

    # -- order conversion ----------------------------------------------------

    @cached_property
    def inverse_perm(self) -> np.ndarray:
        inv = np.empty(self.n, dtype=np.int64)
        inv[np.asarray(self.col_perm)] = np.arange(self.n)
        inv.setflags(write=False)
        return inv

    def permute(self, native_word) -> np.ndarray:
        """Original column order -> codeword order."""
        w = np.asarray(native_word)
        if w.shape != (self.n,):
            raise LengthMismatchError("parola", self.n, w.size)
        return w[np.asarray(self.col_perm)]

    def unpermute(self, codeword) -> np.ndarray:
        """Codeword order -> original column order."""
        w = np.asarray(codeword)
        if w.shape != (self.n,):
            raise LengthMismatchError("parola", self.n, w.size)
        out = np.empty_like(w)
        out[np.asarray(self.col_perm)] = w
        return out

    # -- graph tables --------------------------------------------------------

    @cached_property
    def checks(self) -> tuple[np.ndarray, ...]:
        """Check rows as variable indices in codeword order."""
        inv = self.inverse_perm
        return tuple(np.sort(inv[np.asarray(r)]) for r in self.rows)

    @cached_property
    def _edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        edge_var = np.concatenate(self.checks)
        degrees = np.array([c.size for c in self.checks])
        starts = np.concatenate(([0], np.cumsum(degrees)[:-1]))
        edge_chk = np.repeat(np.arange(len(self.checks)), degrees)
        for a in (edge_var, starts, edge_chk):
            a.setflags(write=False)
        return edge_var, starts, edge_chk

    def parity_matrix(self) -> np.ndarray:
        """Dense H in codeword order."""
        h = np.zeros((len(self.rows), self.n), dtype=np.uint8)
        for j, c in enumerate(self.checks):
            h[j, c] = 1
        return h

    def native_matrix(self) -> np.ndarray:
        """Dense H in the original column order."""
        h = np.zeros((len(self.rows), self.n), dtype=np.uint8)
        for j, r in enumerate(self.rows):
            h[j, list(r)] = 1
        return h


def _gf2_eliminate(a: np.ndarray, columns) -> tuple[np.ndarray, list[int]]:
    """Reduce *a* over GF(2), taking pivots from *columns* in the given order.

    Returns the reduced copy (pivot rows first, in pivot order) and the
    pivot columns. Each pivot column ends up as a unit vector.
    """

    a = np.array(a, dtype=np.uint8, copy=True)
    nrows = a.shape[0]
    pivots: list[int] = []
    row = 0
    for col in columns:
        if row == nrows:
            break
        hits = np.flatnonzero(a[row:, col])
        if hits.size == 0:
            continue
        piv = row + int(hits[0])
        if piv != row:
            a[[row, piv]] = a[[piv, row]]
        others = np.flatnonzero(a[:, col])
        others = others[others != row]
        if others.size:
            a[others] ^= a[row]
        pivots.append(int(col))
        row += 1
    return a, pivots


###############################################################################
# alist I/O
###############################################################################


def load_alist(text: Union[str, TextIO], source: str = "") -> ParityCheckCode:
    """Parse a MacKay alist (1-based, whitespace separated) into a code.

    Both zero-padded and unpadded index lists are accepted. When the row
    section is present it must describe the same edges as the column section.
    """

    if not isinstance(text, str):
        text = text.read()
    lines = [ln.split() for ln in text.splitlines()]
    lines = [(i + 1, ln) for i, ln in enumerate(lines) if ln]
    if len(lines) < 4:
        raise AlistFormatError("intestazione incompleta")

    def ints(entry) -> list[int]:
        lineno, toks = entry
        try:
            return [int(t) for t in toks]
        except ValueError:
            raise AlistFormatError(f"token non intero in {' '.join(toks)!r}", lineno) from None

    header = ints(lines[0])
    if len(header) != 2 or header[0] < 1 or header[1] < 1:
        raise AlistFormatError("la prima riga deve contenere 'n m'", lines[0][0])
    n, m = header
    maxes = ints(lines[1])
    if len(maxes) != 2:
        raise AlistFormatError("la seconda riga deve contenere i gradi massimi", lines[1][0])
    col_deg = ints(lines[2])
    row_deg = ints(lines[3])
    if len(col_deg) != n or len(row_deg) != m:
        raise AlistFormatError(f"attesi {n} gradi di colonna e {m} di riga", lines[2][0])
    if sum(col_deg) != sum(row_deg):
        raise AlistFormatError("somma dei gradi di colonna e di riga diversa", lines[3][0])
    if len(lines) < 4 + n:
        raise AlistFormatError(f"attese {n} liste di colonna, trovate {len(lines) - 4}")

    rows: list[list[int]] = [[] for _ in range(m)]
    for v in range(n):
        lineno = lines[4 + v][0]
        entries = [x for x in ints(lines[4 + v]) if x != 0]
        if len(entries) != col_deg[v]:
            raise AlistFormatError(f"colonna {v + 1}: grado {col_deg[v]}, indici {len(entries)}", lineno)
        if len(set(entries)) != len(entries):
            raise AlistFormatError(f"colonna {v + 1}: indici duplicati", lineno)
        for c in entries:
            if not 1 <= c <= m:
                raise AlistFormatError(f"colonna {v + 1}: index out of range ({c} non in 1..{m})", lineno)
            rows[c - 1].append(v)

    if len(lines) >= 4 + n + m:
        for c in range(m):
            lineno = lines[4 + n + c][0]
            entries = [x for x in ints(lines[4 + n + c]) if x != 0]
            for v in entries:
                if not 1 <= v <= n:
                    raise AlistFormatError(f"riga {c + 1}: index out of range ({v} non in 1..{n})", lineno)
            if len(set(entries)) != len(entries):
                raise AlistFormatError(f"riga {c + 1}: indici duplicati", lineno)
            if len(entries) != row_deg[c] or sorted(v - 1 for v in entries) != sorted(rows[c]):
                raise AlistFormatError(f"riga {c + 1} incoerente con le liste di colonna", lineno)
    elif len(lines) > 4 + n:
        raise AlistFormatError("sezione delle righe troncata")

    for c, r in enumerate(rows):
        if not r:
            raise AlistFormatError(f"riga di parità {c + 1} vuota")

    return ParityCheckCode.from_rows(n, rows, source=source)


def dump_alist(code: ParityCheckCode) -> str:
    """Render *code* (original column order) as a zero-padded alist."""

    n, m = code.n, len(code.rows)
    h = code.native_matrix()
    cols = [(np.flatnonzero(h[:, v]) + 1).tolist() for v in range(n)]
    max_c = max(len(c) for c in cols) if cols else 0
    max_r = max(len(r) for r in code.rows)
    out = io.StringIO()
    out.write(f"{n} {m}\n{max_c} {max_r}\n")
    out.write(" ".join(str(len(c)) for c in cols) + "\n")
    out.write(" ".join(str(len(r)) for r in code.rows) + "\n")
    for c in cols:
        out.write(" ".join(str(x) for x in c + [0] * (max_c - len(c))) + "\n")
    for r in code.rows:
        idx = [v + 1 for v in r]
        out.write(" ".join(str(x) for x in idx + [0] * (max_r - len(idx))) + "\n")
    return out.getvalue()


###############################################################################
# Code construction
###############################################################################


def gallager_code(n: int, wc: int = 3, wr: int = 6, seed: int = 0, max_passes: int = 200) -> ParityCheckCode:
    """Seeded regular (wc, wr) code by random socket matching.

    Duplicate edges are always repaired; 4-cycles are removed with
    degree-preserving edge swaps where possible and the best configuration
    found is kept.
    """

    if n < 1 or wc < 1 or wr < 2 or (n * wc) % wr:
        raise ValueError(f"parametri non validi: n={n}, wc={wc}, wr={wr} (n*wc deve essere multiplo di wr)")
    m = n * wc // wr
    if wr > n:
        raise ValueError(f"wr={wr} maggiore di n={n}")
    rng = streams.stream_rng(seed, 0, streams.CODE)
    edge_row = np.repeat(np.arange(m), wr)
    edge_col = rng.permutation(np.repeat(np.arange(n), wc))

    def swap_out(bad: np.ndarray) -> None:
        partners = rng.integers(0, edge_col.size, size=bad.size)
        for e, f in zip(bad.tolist(), partners.tolist()):
            edge_col[e], edge_col[f] = edge_col[f], edge_col[e]

    for _ in range(max_passes):
        dup = _duplicate_edges(edge_row, edge_col, m, n)
        if dup.size == 0:
            break
        swap_out(dup)
    else:
        raise RuntimeError(f"impossibile eliminare gli archi doppi (n={n}, wc={wc}, wr={wr})")

    best = edge_col.copy()
    best_bad = _four_cycle_edges(edge_row, edge_col, m, n, wr)
    for _ in range(max_passes):
        if best_bad.size == 0:
            break
        edge_col[:] = best
        swap_out(best_bad)
        if _duplicate_edges(edge_row, edge_col, m, n).size:
            continue
        bad = _four_cycle_edges(edge_row, edge_col, m, n, wr)
        if bad.size < best_bad.size:
            best, best_bad = edge_col.copy(), bad
    if best_bad.size:
        log.warning("codice (%d,%d,%d): restano %d archi su cicli di lunghezza 4", n, wc, wr, best_bad.size)

    rows = [sorted(best[j * wr:(j + 1) * wr].tolist()) for j in range(m)]
    return ParityCheckCode.from_rows(n, rows, source=f"gallager:n={n},wc={wc},wr={wr},seed={seed}")


def _duplicate_edges(edge_row, edge_col, m, n) -> np.ndarray:
    h = np.zeros((m, n), dtype=np.int32)
    np.add.at(h, (edge_row, edge_col), 1)
    return np.flatnonzero(h[edge_row, edge_col] > 1)


def _four_cycle_edges(edge_row, edge_col, m, n, wr) -> np.ndarray:
    """One edge per pair of checks sharing two or more variables."""
    hb = np.zeros((m, n), dtype=np.float32)
    hb[edge_row, edge_col] = 1.0
    overlap = hb @ hb.T
    np.fill_diagonal(overlap, 0.0)
    r1, r2 = np.nonzero(np.triu(overlap >= 2.0))
    bad = set()
    for a, b in zip(r1.tolist(), r2.tolist()):
        shared = np.flatnonzero(hb[a] * hb[b])
        span = np.arange(b * wr, (b + 1) * wr)
        e = span[edge_col[span] == shared[0]]
        bad.add(int(e[0]))
    return np.array(sorted(bad), dtype=np.int64)


_GALLAGER_REF = re.compile(r"^gallager:(.*)$")


def load_code(ref: str) -> ParityCheckCode:
    """Resolve a code reference: ``gallager:n=..,wc=..,wr=..,seed=..``,
    ``alist:PATH`` or a bare alist path."""

    m = _GALLAGER_REF.match(ref.strip())
    if m:
        params = {"n": 0, "wc": 3, "wr": 6, "seed": 0}
        for part in m.group(1).split(","):
            if not part.strip():
                continue
            key, _, val = part.partition("=")
            if key.strip() not in params:
                raise ValueError(f"parametro sconosciuto nel riferimento al codice: {key!r}")
            params[key.strip()] = int(val)
        return gallager_code(**params)
    path = Path(ref[len("alist:"):] if ref.startswith("alist:") else ref)
    return load_alist(path.read_text(encoding="utf-8"), source=str(path))


###############################################################################
# Encoding, syndrome, BP
###############################################################################


def encode(info, code: ParityCheckCode) -> np.ndarray:
    """Systematic encoding: returns ``[info | P·info]`` (codeword order)."""

    u = as_bits(info)
    if u.size != code.k:
        raise LengthMismatchError("informazione", code.k, u.size)
    parity = (code.parity_generator @ u.astype(np.int64)) % 2
    return np.concatenate((u, parity.astype(np.uint8)))


def syndrome(code: ParityCheckCode, word) -> np.ndarray:
    w = as_bits(word)
    if w.size != code.n:
        raise LengthMismatchError("parola", code.n, w.size)
    edge_var, starts, _ = code._edges
    return np.bitwise_xor.reduceat(w[edge_var], starts)


class DecodeResult(NamedTuple):
    codeword: np.ndarray
    converged: bool
    iterations: int

    def info(self, k: int) -> np.ndarray:
        """Decoded information bits (first k positions in codeword order)."""
        return self.codeword[:k]


def check_messages(v2c: np.ndarray, starts: np.ndarray, edge_chk: np.ndarray) -> np.ndarray:
    """Tanh-rule check-to-variable messages for edge-ordered *v2c*, within +-LLR_MAX.

    Edges are grouped by check: *starts* holds the first edge of each check
    and *edge_chk* the check of every edge. A degree-1 check sends LLR_MAX.
    """

    t = np.tanh(v2c / 2.0)
    zero = (t == 0).astype(np.int64)
    neg = (t < 0).astype(np.int64)
    logmag = np.log(np.maximum(np.abs(t), _TINY))

    excl_log = np.add.reduceat(logmag, starts)[edge_chk] - logmag
    excl_neg = (np.add.reduceat(neg, starts)[edge_chk] - neg) & 1
    excl_zero = np.add.reduceat(zero, starts)[edge_chk] - zero

    c2v = np.minimum(2.0 * np.arctanh(np.minimum(np.exp(excl_log), _ATANH_CAP)), LLR_MAX)
    c2v = np.where(excl_neg == 1, -c2v, c2v)
    return np.where(excl_zero > 0, 0.0, c2v)


def bp_decode(init_llr, code: ParityCheckCode, max_iters: int = DEFAULT_MAX_ITERS) -> DecodeResult:
    """Flooding sum-product decoding (tanh rule) from initial LLRs.

    Positive LLR favours 0. The hard decision on ``init_llr`` is checked
    before any message update (``iterations == 0`` when it is already a
    codeword). A bit whose total LLR is exactly zero is undecided and blocks
    convergence. Non-convergence is reported, not raised.
    """

    if max_iters < 1:
        raise ValueError(f"max_iters deve essere >= 1 (ricevuto {max_iters})")
    llr = np.asarray(init_llr, dtype=np.float64)
    if llr.shape != (code.n,):
        raise LengthMismatchError("LLR", code.n, llr.size)
    if not np.all(np.isfinite(llr)):
        raise ValueError("LLR iniziali non finiti")
    llr = np.clip(llr, -LLR_MAX, LLR_MAX)
    edge_var, starts, edge_chk = code._edges

    def decide(total: np.ndarray) -> tuple[np.ndarray, bool]:
        hard = (total < 0).astype(np.uint8)
        if np.any(total == 0):
            return hard, False
        return hard, not np.any(np.bitwise_xor.reduceat(hard[edge_var], starts))

    hard, ok = decide(llr)
    if ok:
        return DecodeResult(hard, True, 0)

    v2c = llr[edge_var]
    for it in range(1, max_iters + 1):
        c2v = check_messages(v2c, starts, edge_chk)
        total = llr + np.bincount(edge_var, weights=c2v, minlength=code.n)
        hard, ok = decide(total)
        if ok:
            return DecodeResult(hard, True, it)
        v2c = np.clip(total[edge_var] - c2v, -LLR_MAX, LLR_MAX)
    return DecodeResult(hard, False, max_iters)
