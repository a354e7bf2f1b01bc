"""Binary dataset files and the JSONL debug export.

File layout (all integers little-endian)::

    "MSEP" | version u16 | n u32 | theta f64 | count u64 | records...

    record = x (ceil(n/8) bytes, LSB-first) | idx u32 | A (n rows of ceil(n/8))
             | yvec | zvec | zbit u8
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from . import gf2
from .taskgen import Dataset, XBatch, YBatch, ZBatch

MAGIC = b"MSEP"
VERSION = 1
HEADER = struct.Struct("<4sHIdQ")


class FormatError(ValueError):
    pass


def record_dtype(n: int) -> np.dtype:
    nb = gf2.nbytes(n)
    return np.dtype([("x", np.uint8, (nb,)), ("idx", "<u4"), ("A", np.uint8, (n, nb)),
                     ("y", np.uint8, (nb,)), ("z", np.uint8, (nb,)), ("zbit", np.uint8)])


def dataset_to_bytes(dataset: Dataset, theta: float) -> bytes:
    n = dataset.n
    rec = np.zeros(len(dataset), dtype=record_dtype(n))
    rec["x"] = gf2.words_to_bytes(dataset.x.xvec, n)
    rec["idx"] = dataset.x.idx
    rec["A"] = gf2.words_to_bytes(dataset.y.A, n)
    rec["y"] = gf2.words_to_bytes(dataset.y.yvec, n)
    rec["z"] = gf2.words_to_bytes(dataset.z.zvec, n)
    rec["zbit"] = dataset.z.zbit
    return HEADER.pack(MAGIC, VERSION, n, float(theta), len(dataset)) + rec.tobytes()


def dataset_from_bytes(data: bytes) -> tuple[Dataset, float]:
    if len(data) < HEADER.size:
        raise FormatError("truncated header")
    magic, version, n, theta, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    dt = record_dtype(n)
    body = memoryview(data)[HEADER.size:]
    if len(body) != count * dt.itemsize:
        raise FormatError(f"expected {count} records of {dt.itemsize} bytes, got {len(body)} bytes")
    rec = np.frombuffer(body, dtype=dt, count=count)
    x = XBatch(n, gf2.bytes_to_words(rec["x"], n), rec["idx"].astype(np.int64))
    y = YBatch(n, gf2.bytes_to_words(rec["A"], n), gf2.bytes_to_words(rec["y"], n))
    z = ZBatch(n, gf2.bytes_to_words(rec["z"], n), rec["zbit"].copy())
    return Dataset(n, x, y, z), theta


def write_dataset(path: str | Path | BinaryIO, dataset: Dataset, theta: float) -> None:
    payload = dataset_to_bytes(dataset, theta)
    if hasattr(path, "write"):
        path.write(payload)
    else:
        Path(path).write_bytes(payload)


def read_dataset(path: str | Path | BinaryIO) -> tuple[Dataset, float]:
    data = path.read() if hasattr(path, "read") else Path(path).read_bytes()
    return dataset_from_bytes(data)


def export_jsonl(dataset: Dataset, path: str | Path) -> None:
    """One JSON object per record with hex-encoded bit fields."""
    n = dataset.n
    with open(path, "w") as fh:
        for i in range(len(dataset)):
            rec = {
                "x": gf2.words_to_bytes(dataset.x.xvec[i], n).tobytes().hex(),
                "idx": int(dataset.x.idx[i]),
                "A": [gf2.words_to_bytes(row, n).tobytes().hex() for row in dataset.y.A[i]],
                "y": gf2.words_to_bytes(dataset.y.yvec[i], n).tobytes().hex(),
                "z": gf2.words_to_bytes(dataset.z.zvec[i], n).tobytes().hex(),
                "zbit": int(dataset.z.zbit[i]),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
