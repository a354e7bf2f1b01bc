from __future__ import annotations

import numpy as np
import pytest

import oracles
from msep import gf2
from msep.gf2 import BitMatrix, BitVec, DimensionError
from msep.rng import Rng
from msep.taskgen import (BitLabelTask, Dataset, ModalityX, ParityToyTask, SecretMode,
                          SeparationTask, TaskParams, World, apply_phi, apply_psi, fast_k,
                          label_disagreement, project_xz, project_yz, sample_chi, sample_dataset,
                          sample_dlpn, sample_zeta)


def test_params_defaults_and_validation():
    p = TaskParams(32)
    assert p.theta == pytest.approx(32 ** -0.5)
    assert p.k == 32 ** 3
    assert TaskParams(16, 0.0).theta == 0.0
    for bad in (dict(n=1), dict(n=8, theta=0.5), dict(n=8, theta=-0.1), dict(n=8, k=0)):
        with pytest.raises(ValueError):
            TaskParams(**bad)
    assert fast_k(64) < 64 ** 3


def test_dataset_equations_hold_with_noise_trace():
    params = TaskParams(20)
    secret = sample_zeta(params, Rng(1).child("s"))
    data, noise = sample_dataset(params, secret, 300, Rng(1).child("d"), chunk=128,
                                 return_noise=True)
    n = params.n
    w = secret.w.bits()
    x = gf2.unpack_bits(data.x.xvec, n)
    a = gf2.unpack_bits(data.y.A, n)
    b, b1 = gf2.unpack_bits(noise.b, n), gf2.unpack_bits(noise.b1, n)
    for i in range(len(data)):
        e = np.zeros(n, dtype=np.int64)
        e[data.x.idx[i]] = 1
        y = (oracles.dense_vec_mat(x[i], a[i]) + b[i] + e) % 2
        assert np.array_equal(gf2.unpack_bits(data.y.yvec[i], n), y)
        z = (oracles.dense_mat_vec(a[i], w) + b1[i]) % 2
        assert np.array_equal(gf2.unpack_bits(data.z.zvec[i], n), z)
        assert data.z.zbit[i] == (oracles.inner(y.tolist(), w.tolist()) + noise.b2[i]) % 2


def test_sampling_is_deterministic_and_chunk_indexed():
    params = TaskParams(16, k=100)
    secret = sample_zeta(params, Rng(2))
    a = sample_dataset(params, secret, 500, Rng(3), chunk=128)
    b = sample_dataset(params, secret, 500, Rng(3), chunk=128)
    assert np.array_equal(a.y.A, b.y.A) and np.array_equal(a.z.zvec, b.z.zvec)
    # the first chunk does not depend on how many chunks follow
    c = sample_dataset(params, secret, 128, Rng(3), chunk=128)
    assert np.array_equal(a.y.yvec[:128], c.y.yvec)


def test_bernoulli_rates():
    params = TaskParams(32)
    secret = sample_zeta(params, Rng(4))
    data, noise = sample_dataset(params, secret, 20_000, Rng(5), return_noise=True)
    x = gf2.unpack_bits(data.x.xvec, 32)
    assert abs(x.mean() - params.theta) < 0.005
    assert abs(gf2.unpack_bits(noise.b1, 32).mean() - params.theta) < 0.005
    assert abs(np.bincount(data.x.idx, minlength=32) / 20_000 - 1 / 32).max() < 0.01


def test_single_point_samplers():
    params = TaskParams(12)
    rng = Rng(6)
    x = sample_chi(params, rng.child("x"))
    assert len(x.xvec) == 12 and 0 <= x.idx < 12
    y = apply_phi(params, x, rng.child("y"))
    assert y.A.rows == y.A.cols == 12
    z = apply_psi(params, sample_zeta(params, rng.child("w")), y, rng.child("z"))
    assert z.bits().shape == (13,)
    with pytest.raises(DimensionError):
        apply_phi(params, ModalityX(BitVec(11), 0), rng)
    with pytest.raises(DimensionError):
        apply_psi(TaskParams(13), sample_zeta(TaskParams(13), rng), y, rng)


def test_batch_indexing_and_projection():
    params = TaskParams(16)
    data = sample_dataset(params, sample_zeta(params, Rng(7)), 10, Rng(8))
    assert isinstance(data[3].y.A, BitMatrix)
    assert len(data[2:5]) == 3
    pairs = project_yz(data)
    y, z = pairs[4]
    assert y == data[4].y and z == data[4].z
    assert len(project_xz(data)) == 10
    rebuilt = Dataset.from_points(list(data))
    assert np.array_equal(rebuilt.y.A, data.y.A)
    with pytest.raises(IndexError):
        data.y[10]
    assert np.array_equal(label_disagreement(data.z, data.z), np.zeros(10))


def test_tasks_share_interface():
    rng = Rng(9)
    for task in (SeparationTask(TaskParams(16)), BitLabelTask(TaskParams(16)), ParityToyTask(16)):
        concept = task.sample_concept(rng.child("c"))
        xs, ys = task.sample_unlabeled(task.sample_mapping(rng), 50, rng.child("u"))
        labels = task.label(concept, ys, rng.child("l"))
        assert len(labels) == len(task.random_labels(50, rng.child("r"))) == 50
        assert task.describe()["n"] == 16


def test_dlpn_worlds():
    rng = Rng(10)
    inst = sample_dlpn(16, 4000, 0.1, SecretMode.BERNOULLI, World.PLANTED, rng.child("p"))
    resid = inst.q ^ gf2.row_times_matrix(inst.secret, inst.A)
    assert abs(resid.weight() / 4000 - 0.1) < 0.02
    uni = sample_dlpn(16, 4000, 0.1, "uniform_secret", "uniform", rng.child("u"))
    resid = uni.q ^ gf2.row_times_matrix(uni.secret, uni.A)
    assert abs(resid.weight() / 4000 - 0.5) < 0.04
    assert not hasattr(inst.public(), "world")
