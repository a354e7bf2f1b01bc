"""Bit-packed linear algebra over Z_2.

Vectors are stored as little-endian arrays of 64-bit words: bit ``j`` lives
in word ``j // 64`` at position ``j % 64`` (least-significant bit first).
Bits at positions ``>= len`` are always zero.

Single values use :class:`BitVec` / :class:`BitMatrix`.  The ``batch_*``
kernels operate on raw word arrays with arbitrary leading batch axes and
are what the samplers and learners use on large datasets.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .rng import Rng

WORD = 64
_U64 = np.uint64


class DimensionError(ValueError):
    pass


class EmptyBinError(ValueError):
    pass


def nwords(n: int) -> int:
    return (n + WORD - 1) // WORD


def nbytes(n: int) -> int:
    return (n + 7) // 8


def tail_mask(n: int) -> np.ndarray:
    """Per-word masks keeping only the first ``n`` bits."""
    w = nwords(n)
    mask = np.full(w, np.iinfo(np.uint64).max, dtype=_U64)
    rem = n % WORD
    if w and rem:
        mask[-1] = _U64((1 << rem) - 1)
    return mask


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a ``(..., n)`` 0/1 array into ``(..., nwords(n))`` uint64 words."""
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.shape[-1]
    w = nwords(n)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    pad = 8 * w - packed.shape[-1]
    if pad:
        widths = [(0, 0)] * (packed.ndim - 1) + [(0, pad)]
        packed = np.pad(packed, widths)
    return np.ascontiguousarray(packed).view("<u8").astype(_U64, copy=False)


def unpack_bits(words: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns uint8 of shape ``(..., n)``."""
    words = np.ascontiguousarray(words, dtype="<u8")
    as_bytes = words.view(np.uint8)
    return np.unpackbits(as_bytes, axis=-1, count=n, bitorder="little")


def words_to_bytes(words: np.ndarray, n: int) -> np.ndarray:
    """``(..., W)`` words -> ``(..., ceil(n/8))`` bytes, LSB-first."""
    words = np.ascontiguousarray(words, dtype="<u8")
    return words.view(np.uint8)[..., : nbytes(n)]


def bytes_to_words(data: np.ndarray, n: int) -> np.ndarray:
    data = np.asarray(data, dtype=np.uint8)
    w = nwords(n)
    pad = 8 * w - data.shape[-1]
    if pad:
        widths = [(0, 0)] * (data.ndim - 1) + [(0, pad)]
        data = np.pad(data, widths)
    out = np.ascontiguousarray(data).view("<u8").astype(_U64, copy=True)
    return out & tail_mask(n)


def parity(words: np.ndarray) -> np.ndarray:
    """Parity of the set bits along the last (word) axis."""
    return (np.bitwise_count(words).sum(axis=-1, dtype=np.int64) & 1).astype(np.uint8)


# ---------------------------------------------------------------------------
# batch kernels


def batch_inner(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return parity(np.bitwise_and(u, v))


def batch_row_times_matrix(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    """``x`` is ``(..., W_r)`` selecting rows of ``a`` (``(..., rows, W_c)``)."""
    rows = a.shape[-2]
    sel = unpack_bits(x, rows).astype(bool)
    picked = np.where(sel[..., None], a, _U64(0))
    return np.bitwise_xor.reduce(picked, axis=-2)


def batch_matrix_times_col(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Per-row inner products of ``a`` (``(..., rows, W)``) with ``w``, packed."""
    w = np.asarray(w, dtype=_U64)
    if w.ndim == a.ndim - 1:
        w = w[..., None, :]
    return pack_bits(parity(np.bitwise_and(a, w)))


def bernoulli_threshold(theta: float) -> int:
    if not (0.0 <= theta < 0.5) or math.isnan(theta):
        raise ValueError(f"theta must lie in [0, 0.5), got {theta!r}")
    return int(math.ldexp(theta, 64))


def bernoulli_bits(rng: Rng, shape, theta: float) -> np.ndarray:
    """i.i.d. Ber(theta) bits; one 64-bit draw per bit compared to floor(theta*2^64)."""
    thr = bernoulli_threshold(theta)
    shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
    if thr == 0:
        return np.zeros(shape, dtype=np.uint8)
    draws = rng.raw(int(np.prod(shape, dtype=np.int64))).reshape(shape)
    return (draws < _U64(thr)).astype(np.uint8)


def bernoulli_words(rng: Rng, prefix, n: int, theta: float) -> np.ndarray:
    prefix = (prefix,) if isinstance(prefix, (int, np.integer)) else tuple(prefix)
    return pack_bits(bernoulli_bits(rng, prefix + (n,), theta))


def uniform_words(rng: Rng, prefix, n: int) -> np.ndarray:
    prefix = (prefix,) if isinstance(prefix, (int, np.integer)) else tuple(prefix)
    w = nwords(n)
    draws = rng.raw(int(np.prod(prefix, dtype=np.int64)) * w).reshape(prefix + (w,))
    return draws & tail_mask(n)


# ---------------------------------------------------------------------------
# value types


class BitVec:
    """Fixed-length vector over Z_2."""

    __slots__ = ("_n", "words")

    def __init__(self, n: int, words: np.ndarray | None = None):
        if n < 0:
            raise DimensionError("negative length")
        self._n = int(n)
        if words is None:
            self.words = np.zeros(nwords(n), dtype=_U64)
        else:
            words = np.asarray(words, dtype=_U64).reshape(-1)
            if words.shape[0] != nwords(n):
                raise DimensionError(f"{words.shape[0]} words for length {n}")
            self.words = words & tail_mask(n)

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitVec":
        arr = np.fromiter((int(b) & 1 for b in bits), dtype=np.uint8)
        return cls(arr.shape[0], pack_bits(arr))

    @classmethod
    def from_str(cls, s: str) -> "BitVec":
        """``"1101"`` -> bits 0..3 read left to right."""
        return cls.from_bits(int(c) for c in s if c in "01")

    @classmethod
    def from_int(cls, value: int, n: int) -> "BitVec":
        return cls.from_bits((value >> j) & 1 for j in range(n))

    @classmethod
    def from_bytes(cls, data: bytes, n: int) -> "BitVec":
        if len(data) != nbytes(n):
            raise DimensionError(f"{len(data)} bytes for length {n}")
        return cls(n, bytes_to_words(np.frombuffer(data, dtype=np.uint8), n))

    def __len__(self) -> int:
        return self._n

    def __getitem__(self, j: int) -> int:
        if not 0 <= j < self._n:
            raise IndexError(j)
        return int((self.words[j // WORD] >> _U64(j % WORD)) & _U64(1))

    def __iter__(self):
        return iter(self.bits().tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitVec):
            return NotImplemented
        return self._n == other._n and bool(np.array_equal(self.words, other.words))

    def __hash__(self) -> int:
        return hash((self._n, self.words.tobytes()))

    def __xor__(self, other: "BitVec") -> "BitVec":
        return xor_add(self, other)

    def bits(self) -> np.ndarray:
        return unpack_bits(self.words, self._n)

    def weight(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def to_int(self) -> int:
        return sum(int(w) << (WORD * i) for i, w in enumerate(self.words))

    def to_bytes(self) -> bytes:
        return words_to_bytes(self.words, self._n).tobytes()

    def __str__(self) -> str:
        return "".join(map(str, self.bits().tolist()))

    def __repr__(self) -> str:
        return f"BitVec({str(self)!r})"


class BitMatrix:
    """Row-major matrix over Z_2; each row packed like a :class:`BitVec`."""

    __slots__ = ("rows", "cols", "words")

    def __init__(self, rows: int, cols: int, words: np.ndarray | None = None):
        self.rows = int(rows)
        self.cols = int(cols)
        shape = (self.rows, nwords(self.cols))
        if words is None:
            self.words = np.zeros(shape, dtype=_U64)
        else:
            words = np.asarray(words, dtype=_U64)
            if words.shape != shape:
                raise DimensionError(f"word array {words.shape} != {shape}")
            self.words = words & tail_mask(self.cols)

    @classmethod
    def from_rows(cls, rows: Sequence[BitVec | str]) -> "BitMatrix":
        vecs = [BitVec.from_str(r) if isinstance(r, str) else r for r in rows]
        if not vecs:
            raise DimensionError("no rows")
        cols = len(vecs[0])
        if any(len(v) != cols for v in vecs):
            raise DimensionError("ragged rows")
        return cls(len(vecs), cols, np.stack([v.words for v in vecs]))

    @classmethod
    def from_bits(cls, bits) -> "BitMatrix":
        bits = np.asarray(bits, dtype=np.uint8)
        return cls(bits.shape[0], bits.shape[1], pack_bits(bits))

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls.from_bits(np.eye(n, dtype=np.uint8))

    def row(self, i: int) -> BitVec:
        return BitVec(self.cols, self.words[i])

    def bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.cols)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return (self.rows, self.cols) == (other.rows, other.cols) and bool(
            np.array_equal(self.words, other.words))

    def __repr__(self) -> str:
        return f"BitMatrix({self.rows}x{self.cols})"


# ---------------------------------------------------------------------------
# operations


def _same_len(u: BitVec, v: BitVec) -> None:
    if len(u) != len(v):
        raise DimensionError(f"length mismatch: {len(u)} vs {len(v)}")


def xor_add(u: BitVec, v: BitVec) -> BitVec:
    _same_len(u, v)
    return BitVec(len(u), u.words ^ v.words)


def inner(u: BitVec, v: BitVec) -> int:
    _same_len(u, v)
    return int(batch_inner(u.words, v.words))


def row_times_matrix(x: BitVec, a: BitMatrix) -> BitVec:
    """``x·A``: XOR of the rows of ``a`` selected by the set bits of ``x``."""
    if len(x) != a.rows:
        raise DimensionError(f"vector length {len(x)} vs {a.rows} rows")
    return BitVec(a.cols, batch_row_times_matrix(x.words, a.words))


def matrix_times_col(y: BitMatrix, w: BitVec) -> BitVec:
    """``Y·w`` for a column vector ``w``."""
    if len(w) != y.cols:
        raise DimensionError(f"vector length {len(w)} vs {y.cols} columns")
    return BitVec(y.rows, batch_matrix_times_col(y.words, w.words))


def bernoulli_vec(length: int, theta: float, rng: Rng) -> BitVec:
    return BitVec(length, bernoulli_words(rng, (), length, theta))


def uniform_vec(length: int, rng: Rng) -> BitVec:
    if length <= 0:
        raise DimensionError("length must be positive")
    return BitVec(length, uniform_words(rng, (), length))


def uniform_matrix(rows: int, cols: int, rng: Rng) -> BitMatrix:
    if rows <= 0 or cols <= 0:
        raise DimensionError("dimensions must be positive")
    return BitMatrix(rows, cols, uniform_words(rng, rows, cols))


def basis_vec(i: int, n: int) -> BitVec:
    if not 0 <= i < n:
        raise IndexError(f"basis index {i} outside [0, {n})")
    words = np.zeros(nwords(n), dtype=_U64)
    words[i // WORD] = _U64(1) << _U64(i % WORD)
    return BitVec(n, words)


def majority(bits: Sequence[int]) -> int:
    """1 iff strictly more ones than zeros; ties go to 0."""
    if len(bits) == 0:
        raise EmptyBinError("majority of an empty list")
    ones = sum(int(b) & 1 for b in bits)
    return int(2 * ones > len(bits))


def solve(rows: Sequence[int], rhs: Sequence[int], n: int) -> int | None:
    """Solve ``M·w = rhs`` for a square-or-taller system given as int bitsets.

    ``rows[r]`` holds row ``r`` of ``M`` (bit ``j`` = column ``j``).  Returns
    ``w`` as an int bitset, or ``None`` when ``M`` has rank below ``n``.
    Rows beyond the first ``n`` pivots are ignored, not checked.
    """
    aug = [(r & ((1 << n) - 1)) | ((b & 1) << n) for r, b in zip(rows, rhs)]
    pivots = []
    for col in range(n):
        bit = 1 << col
        for i in range(len(pivots), len(aug)):
            if aug[i] & bit:
                break
        else:
            return None
        p = len(pivots)
        aug[p], aug[i] = aug[i], aug[p]
        prow = aug[p]
        for i in range(len(aug)):
            if i != p and aug[i] & bit:
                aug[i] ^= prow
        pivots.append(col)
    w = 0
    for p, col in enumerate(pivots):
        if (aug[p] >> n) & 1:
            w |= 1 << col
    return w
