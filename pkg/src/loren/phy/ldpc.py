"""Regular LDPC codes: Gallager construction, systematic encoding, sum-product decoding."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from ..llr import hard_decision

COLUMN_WEIGHT = 3
_MAGIC = b"LDPC"
_VERSION = 1
_CLIP = 1.0 - 1e-15


def canonical_code_rate(rate: float) -> Fraction:
    """Snap a code rate to the nearest fraction with denominator <= 12.

    0.66 becomes 2/3; rates that are not within 0.01 of such a fraction are
    kept as given.
    """
    rate = float(rate)
    if not 0.0 < rate < 1.0:
        raise ValueError(f"code rate must lie in (0, 1), got {rate}")
    frac = Fraction(rate).limit_denominator(12)
    if abs(float(frac) - rate) <= 0.01:
        return frac
    return Fraction(rate).limit_denominator(10_000)


def cr_milli(rate: float) -> int:
    """Integer key of a code rate, ``round(1000 * canonical rate)`` (2/3 -> 667)."""
    return int(round(1000 * float(canonical_code_rate(rate))))


@dataclass(eq=False)
class LdpcCode:
    """Parity-check matrix with a systematic encoder (information bits first).

    ``check_cols[i]`` lists the variable nodes of check ``i``.
    """

    n: int
    k: int
    check_cols: list[np.ndarray]
    seed: int = 0
    target_rate: float = 0.0
    parity_cols: np.ndarray = field(init=False, repr=False)
    parity_map: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.check_cols = [np.asarray(c, dtype=np.int64) for c in self.check_cols]
        rank, pivots, P = _systematic_form(self.dense_h(), self.n)
        if self.n - rank != self.k:
            raise ValueError(f"parity-check matrix has rank {rank}, inconsistent with k={self.k}")
        self.parity_cols = pivots
        self.parity_map = P
        if not self.target_rate:
            self.target_rate = self.k / self.n
        self._edges()

    @property
    def m(self) -> int:
        return len(self.check_cols)

    @property
    def rate(self) -> float:
        return self.k / self.n

    def dense_h(self) -> np.ndarray:
        H = np.zeros((self.m, self.n), dtype=np.uint8)
        for i, cols in enumerate(self.check_cols):
            H[i, cols] = 1
        return H

    def generator(self) -> np.ndarray:
        """Dense ``k x n`` generator matrix ``G`` with ``H G^T = 0``."""
        G = np.zeros((self.k, self.n), dtype=np.uint8)
        G[:, :self.k] = np.eye(self.k, dtype=np.uint8)
        G[:, self.parity_cols] = self.parity_map.T
        return G

    def syndrome(self, bits: np.ndarray) -> np.ndarray:
        b = np.asarray(bits, dtype=np.int64)
        return np.add.reduceat(b[self.edge_var], self.check_start) & 1

    def _edges(self) -> None:
        deg = np.array([len(c) for c in self.check_cols])
        self.edge_var = np.concatenate(self.check_cols)
        self.edge_check = np.repeat(np.arange(self.m), deg)
        self.check_start = np.concatenate([[0], np.cumsum(deg)[:-1]])
        self._parity_map_f = None

    # ------------------------------------------------------------------ I/O

    def to_bytes(self) -> bytes:
        out = [_MAGIC, struct.pack("<IIII", _VERSION, self.n, self.k, self.m)]
        for cols in self.check_cols:
            out.append(struct.pack("<I", len(cols)))
            out.append(np.asarray(cols, dtype="<u4").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "LdpcCode":
        if blob[:4] != _MAGIC:
            raise ValueError("not an LDPC code file (bad magic)")
        if len(blob) < 20:
            raise ValueError("truncated LDPC header")
        version, n, k, m = struct.unpack_from("<IIII", blob, 4)
        if version != _VERSION:
            raise ValueError(f"unsupported LDPC file version {version}")
        pos, rows = 20, []
        for _ in range(m):
            if pos + 4 > len(blob):
                raise ValueError("truncated LDPC row table")
            (cnt,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            if pos + 4 * cnt > len(blob):
                raise ValueError("truncated LDPC row table")
            rows.append(np.frombuffer(blob, dtype="<u4", count=cnt, offset=pos).astype(np.int64))
            pos += 4 * cnt
        if pos != len(blob):
            raise ValueError("trailing bytes after LDPC row table")
        return cls(n=n, k=k, check_cols=rows)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "LdpcCode":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _systematic_form(H: np.ndarray, n: int) -> tuple[int, np.ndarray, np.ndarray]:
    """GF(2) elimination scanning columns right to left.

    Returns (rank, pivot columns, P) where the parity bit at ``pivots[i]``
    equals ``P[i] @ info mod 2`` for the non-pivot (information) columns.
    """
    m = H.shape[0]
    words = (n + 63) // 64
    packed = np.zeros((m, words * 8), dtype=np.uint8)
    packed[:, : (n + 7) // 8] = np.packbits(H, axis=1)
    w64 = packed.view(np.uint64)
    row_free = np.ones(m, dtype=bool)
    pivot_rows, pivot_cols = [], []
    for c in range(n - 1, -1, -1):
        if len(pivot_rows) == m:
            break
        byte, bit = c >> 3, 7 - (c & 7)
        has = ((packed[:, byte] >> bit) & 1).astype(bool)
        cand = np.flatnonzero(has & row_free)
        if cand.size == 0:
            continue
        r = cand[0]
        others = np.flatnonzero(has)
        others = others[others != r]
        if others.size:
            w64[others] ^= w64[r]
        row_free[r] = False
        pivot_rows.append(r)
        pivot_cols.append(c)
    rank = len(pivot_rows)
    reduced = np.unpackbits(packed, axis=1)[:, :n]
    pivots = np.array(pivot_cols, dtype=np.int64)
    info = np.setdiff1d(np.arange(n), pivots)
    P = reduced[np.array(pivot_rows, dtype=np.int64)][:, info] if rank else np.zeros((0, info.size), np.uint8)
    return rank, pivots, P


def _gallager_rows(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Row index per (column, band): three bands, each a column partition."""
    bands = np.array_split(np.arange(m), COLUMN_WEIGHT)
    rows = np.empty((n, COLUMN_WEIGHT), dtype=np.int64)
    for j, band in enumerate(bands):
        # spread columns evenly over the band's rows
        slots = band[np.arange(n) % band.size]
        rows[:, j] = slots[rng.permutation(n)]
    return rows


def build_ldpc(n: int, rate: float, seed: int = 0) -> LdpcCode:
    """Build a column-weight-3 regular LDPC code of length ``n`` near ``rate``.

    If ``H`` is rank deficient, ``k = n - rank(H)`` exceeds ``round(rate*n)``.
    """
    return _build_cached(int(n), float(canonical_code_rate(rate)), int(seed))


@lru_cache(maxsize=16)
def _build_cached(n: int, rate: float, seed: int) -> LdpcCode:
    if not 0.0 < rate < 1.0:
        raise ValueError(f"code rate must lie in (0, 1), got {rate}")
    m = int(round((1.0 - rate) * n))
    if m < COLUMN_WEIGHT or m >= n:
        raise ValueError(f"n={n} too small for rate {rate} with column weight {COLUMN_WEIGHT}")
    rng = np.random.default_rng(seed)
    rows = _gallager_rows(n, m, rng)
    H = np.zeros((m, n), dtype=np.uint8)
    H[rows, np.arange(n)[:, None]] = 1
    rank, pivots, _ = _systematic_form(H, n)
    info = np.setdiff1d(np.arange(n), pivots)
    H = H[:, np.concatenate([info, np.sort(pivots)])]
    check_cols = [np.flatnonzero(row) for row in H]
    return LdpcCode(n=n, k=n - rank, check_cols=check_cols, seed=seed, target_rate=rate)


def ldpc_encode(code: LdpcCode, info_bits: np.ndarray) -> np.ndarray:
    """Systematic codeword: ``c[:k] = info_bits`` and ``H c^T = 0``."""
    u = np.asarray(info_bits).astype(np.uint8).ravel()
    if u.size != code.k:
        raise ValueError(f"expected {code.k} information bits, got {u.size}")
    if code._parity_map_f is None:
        code._parity_map_f = code.parity_map.astype(np.float32)
    c = np.zeros(code.n, dtype=np.uint8)
    c[:code.k] = u
    # float32 sums are exact below 2**24
    c[code.parity_cols] = (code._parity_map_f @ u.astype(np.float32)).astype(np.int64) & 1
    return c


def ldpc_decode_bp(code: LdpcCode, llrs: np.ndarray, max_iters: int = 50
                   ) -> tuple[np.ndarray, bool, int]:
    """Sum-product decoding; returns (n hard bits, converged, iterations used).

    The first ``code.k`` returned bits are the information bits.
    """
    llr = np.asarray(llrs, dtype=np.float64).ravel()
    if llr.size != code.n:
        raise ValueError(f"expected {code.n} LLRs, got {llr.size}")
    bits = hard_decision(llr)
    if not code.syndrome(bits).any():
        return bits, True, 0
    ev, ec, start = code.edge_var, code.edge_check, code.check_start
    c2v = np.zeros(ev.size)
    total = llr.copy()
    for it in range(1, max_iters + 1):
        v2c = total[ev] - c2v
        t = np.clip(np.tanh(0.5 * v2c), -_CLIP, _CLIP)
        neg = t < 0
        mag = np.log(np.maximum(np.abs(t), 1e-300))
        mag_sum = np.add.reduceat(mag, start)
        neg_par = np.add.reduceat(neg.astype(np.int64), start) & 1
        ext_mag = np.exp(mag_sum[ec] - mag)
        ext_sign = np.where(neg_par[ec].astype(bool) ^ neg, -1.0, 1.0)
        c2v = ext_sign * 2.0 * np.arctanh(np.minimum(ext_mag, _CLIP))
        total = llr + np.bincount(ev, weights=c2v, minlength=code.n)
        bits = hard_decision(total)
        if not code.syndrome(bits).any():
            return bits, True, it
    return bits, False, max_iters
