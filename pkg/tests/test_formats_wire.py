from __future__ import annotations

import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msep import formats, wire
from msep.rng import Rng
from msep.taskgen import BitBatch, TaskParams, VecBatch, sample_dataset, sample_zeta


def _data(n=20, count=37, seed=1):
    params = TaskParams(n)
    return params, sample_dataset(params, sample_zeta(params, Rng(seed)), count, Rng(seed + 1))


def test_dataset_roundtrip_bytes_and_file(tmp_path):
    params, data = _data()
    blob = formats.dataset_to_bytes(data, params.theta)
    assert len(blob) == formats.HEADER.size + 37 * formats.record_dtype(20).itemsize
    path = tmp_path / "d.bin"
    formats.write_dataset(path, data, params.theta)
    back, theta = formats.read_dataset(path)
    assert theta == params.theta and len(back) == 37
    assert formats.dataset_to_bytes(back, theta) == blob
    buf = io.BytesIO()
    formats.write_dataset(buf, data, params.theta)
    buf.seek(0)
    assert formats.dataset_to_bytes(*formats.read_dataset(buf)) == blob


def test_record_layout_is_little_endian():
    params, data = _data(n=16, count=1)
    blob = formats.dataset_to_bytes(data, params.theta)
    body = blob[formats.HEADER.size:]
    assert body[:2] == data.x.xvec[0].astype("<u8").tobytes()[:2]
    assert int.from_bytes(body[2:6], "little") == data.x.idx[0]
    assert body[-1] == data.z.zbit[0]
    assert blob[:4] == b"MSEP"


@pytest.mark.parametrize("mutate", [lambda b: b"XXXX" + b[4:], lambda b: b[:-1],
                                    lambda b: b[:4] + b"\x09\x00" + b[6:], lambda b: b[:10]])
def test_corrupt_files_rejected(mutate):
    params, data = _data()
    with pytest.raises(formats.FormatError):
        formats.dataset_from_bytes(mutate(formats.dataset_to_bytes(data, params.theta)))


def test_jsonl_export(tmp_path):
    params, data = _data(n=12, count=3)
    path = tmp_path / "d.jsonl"
    formats.export_jsonl(data, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    rec = json.loads(lines[1])
    assert rec["idx"] == data.x.idx[1] and len(rec["A"]) == 12
    assert bytes.fromhex(rec["y"]) == data.y[1].yvec.to_bytes()


@given(st.binary(max_size=300), st.sampled_from(list(wire.Tag)))
def test_frame_roundtrip(payload, tag):
    frame = wire.encode_frame(tag, payload)
    assert frame[:4] == len(payload).to_bytes(4, "big") and frame[4] == tag
    assert wire.decode_frame(frame) == (tag, payload)
    assert wire.read_frame(io.BytesIO(frame + b"trailing")) == frame


def test_frame_errors():
    frame = wire.encode_frame(1, b"abc")
    with pytest.raises(wire.WireError):
        wire.decode_frame(frame[:-1])
    with pytest.raises(wire.WireError):
        wire.decode_frame(frame[:3])
    with pytest.raises(wire.WireError):
        wire.decode_frame(frame + frame)
    with pytest.raises(wire.WireError):
        wire.read_frame(io.BytesIO(frame[:6]))


def test_batch_payload_roundtrips():
    params, data = _data(n=33, count=9)
    batches = [data.y, data.z, VecBatch(33, data.x.xvec), BitBatch(data.z.zbit)]
    for batch in batches:
        payload = wire.encode_batch(batch)
        back = wire.decode_batch(payload)
        assert type(back) is type(batch) and len(back) == 9
        assert wire.encode_batch(back) == payload
    with pytest.raises(wire.WireError):
        wire.decode_batch(b"\x09" + wire.encode_batch(data.z)[1:])
    with pytest.raises(wire.WireError):
        wire.decode_batch(wire.encode_batch(data.z)[:-1])


@given(st.lists(st.integers(0, 1), max_size=200))
@settings(max_examples=50)
def test_seed_roundtrip(bits):
    arr = np.array(bits, dtype=np.uint8)
    assert np.array_equal(wire.decode_seed(wire.encode_seed(arr)), arr)
