"""Length-prefixed frames carried between Alice and Bob.

    frame = length u32 (big-endian, payload bytes only) | tag u8 | payload

Payloads reuse the dataset record layout: a small little-endian header
``kind u8 | n u32 | count u64`` followed by packed records.
"""

from __future__ import annotations

import enum
import struct
from typing import BinaryIO, Iterator

import numpy as np

from . import gf2
from .taskgen import BitBatch, VecBatch, YBatch, ZBatch

FRAME = struct.Struct(">IB")
BATCH = struct.Struct("<BIQ")
SEED = struct.Struct("<I")
MAX_FRAME = 1 << 31


class Tag(enum.IntEnum):
    MSG1 = 1
    MSG2 = 2
    EXTRACTOR_SEED = 3


class Kind(enum.IntEnum):
    Y = 1
    Z = 2
    VEC = 3
    BIT = 4


class WireError(ValueError):
    pass


def encode_frame(tag: int, payload: bytes) -> bytes:
    if len(payload) >= MAX_FRAME:
        raise WireError("payload too large")
    return FRAME.pack(len(payload), int(tag)) + payload


def iter_frames(buf: bytes) -> Iterator[tuple[Tag, bytes]]:
    pos = 0
    while pos < len(buf):
        if len(buf) - pos < FRAME.size:
            raise WireError("truncated frame header")
        length, tag = FRAME.unpack_from(buf, pos)
        pos += FRAME.size
        if len(buf) - pos < length:
            raise WireError("truncated frame payload")
        yield Tag(tag), bytes(buf[pos:pos + length])
        pos += length


def decode_frame(frame: bytes) -> tuple[Tag, bytes]:
    frames = list(iter_frames(frame))
    if len(frames) != 1:
        raise WireError(f"expected one frame, found {len(frames)}")
    return frames[0]


def _read_exact(stream, size: int) -> bytes:
    buf = bytearray()
    while len(buf) < size:
        chunk = stream.read(size - len(buf))
        if not chunk:
            raise WireError("stream closed mid-frame")
        buf += chunk
    return bytes(buf)


def write_frame(stream: BinaryIO, frame: bytes) -> None:
    stream.write(frame)
    stream.flush()


def read_frame(stream: BinaryIO) -> bytes:
    header = _read_exact(stream, FRAME.size)
    length, _ = FRAME.unpack(header)
    return header + _read_exact(stream, length)


# ---------------------------------------------------------------------------
# batch payloads


def _dtype(kind: Kind, n: int) -> np.dtype:
    nb = gf2.nbytes(n)
    if kind is Kind.Y:
        return np.dtype([("A", np.uint8, (n, nb)), ("y", np.uint8, (nb,))])
    if kind is Kind.Z:
        return np.dtype([("z", np.uint8, (nb,)), ("zbit", np.uint8)])
    if kind is Kind.VEC:
        return np.dtype([("y", np.uint8, (nb,))])
    return np.dtype([("bit", np.uint8)])


def encode_batch(batch) -> bytes:
    n = batch.n
    if isinstance(batch, YBatch):
        kind = Kind.Y
        rec = np.zeros(len(batch), _dtype(kind, n))
        rec["A"] = gf2.words_to_bytes(batch.A, n)
        rec["y"] = gf2.words_to_bytes(batch.yvec, n)
    elif isinstance(batch, ZBatch):
        kind = Kind.Z
        rec = np.zeros(len(batch), _dtype(kind, n))
        rec["z"] = gf2.words_to_bytes(batch.zvec, n)
        rec["zbit"] = batch.zbit
    elif isinstance(batch, VecBatch):
        kind = Kind.VEC
        rec = np.zeros(len(batch), _dtype(kind, n))
        rec["y"] = gf2.words_to_bytes(batch.words, n)
    elif isinstance(batch, BitBatch):
        kind = Kind.BIT
        rec = np.zeros(len(batch), _dtype(kind, n))
        rec["bit"] = batch.bits
    else:
        raise WireError(f"no wire encoding for {type(batch).__name__}")
    return BATCH.pack(kind, n, len(batch)) + rec.tobytes()


def decode_batch(payload: bytes):
    if len(payload) < BATCH.size:
        raise WireError("truncated batch header")
    kind, n, count = BATCH.unpack_from(payload)
    try:
        kind = Kind(kind)
    except ValueError:
        raise WireError(f"unknown batch kind {kind}") from None
    dt = _dtype(kind, n)
    body = memoryview(payload)[BATCH.size:]
    if len(body) != count * dt.itemsize:
        raise WireError("batch length does not match header")
    rec = np.frombuffer(body, dtype=dt, count=count)
    if kind is Kind.Y:
        return YBatch(n, gf2.bytes_to_words(rec["A"], n), gf2.bytes_to_words(rec["y"], n))
    if kind is Kind.Z:
        return ZBatch(n, gf2.bytes_to_words(rec["z"], n), rec["zbit"].copy())
    if kind is Kind.VEC:
        return VecBatch(n, gf2.bytes_to_words(rec["y"], n))
    return BitBatch(rec["bit"].copy())


def encode_seed(bits: np.ndarray) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    return SEED.pack(bits.shape[0]) + np.packbits(bits, bitorder="little").tobytes()


def decode_seed(payload: bytes) -> np.ndarray:
    (count,) = SEED.unpack_from(payload)
    body = np.frombuffer(payload, dtype=np.uint8, offset=SEED.size)
    if body.shape[0] != (count + 7) // 8:
        raise WireError("seed length does not match header")
    return np.unpackbits(body, count=count, bitorder="little")
