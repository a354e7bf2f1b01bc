from __future__ import annotations

import logging

import numpy as np
import pytest

import oracles
from msep import gf2
from msep.gf2 import BitVec
from msep.learner import (Hypothesis, NegatedHypothesis, amu_bit_learner, empirical_risk,
                          gauss_attack, learn_amu, learn_amu_streaming, lowweight_attack,
                          mean_vote_accuracy, negate_if_worse, parity_solver_learner, predict,
                          vote_accuracy, vote_bits, xz_independence_probe)
from msep.rng import Rng
from msep.taskgen import (BitBatch, ParityToyTask, Secret, TaskParams, project_yz,
                          sample_dataset, sample_zeta, uniform_zbatch)


@pytest.mark.parametrize("w,i,theta", [([1, 0, 1], 0, 0.2), ([0, 0, 0], 2, 0.1),
                                       ([1, 1, 1], 1, 0.3), ([0, 1], 1, 0.25)])
def test_vote_accuracy_matches_enumeration(w, i, theta):
    exact = oracles.vote_accuracy_enumerated(w, i, theta)
    assert vote_accuracy(len(w), theta, sum(w)) == pytest.approx(exact, abs=1e-12)


def test_mean_vote_accuracy_is_average_over_weights():
    from math import comb
    n, theta = 10, 0.2
    avg = sum(comb(n, j) * theta ** j * (1 - theta) ** (n - j) * vote_accuracy(n, theta, j)
              for j in range(n + 1))
    assert mean_vote_accuracy(n, theta) == pytest.approx(avg, abs=1e-12)


def test_empirical_vote_rate_matches_exact():
    params = TaskParams(24)
    secret = sample_zeta(params, Rng(1))
    data = sample_dataset(params, secret, 200_000, Rng(2))
    hit = (vote_bits(data) == secret.w.bits()[data.x.idx]).mean()
    exact = vote_accuracy(24, params.theta, secret.w.weight())
    assert abs(hit - exact) < 4 * np.sqrt(0.25 / 200_000)


def test_recovers_secret_in_low_noise_regime():
    params = TaskParams(32, theta=0.05)
    secret = sample_zeta(params, Rng(3))
    h, stats = learn_amu(sample_dataset(params, secret, params.k, Rng(4)), 32)
    assert h.w_hat == secret.w
    assert stats.min_bin_size > 0 and not stats.has_empty_bins
    test = project_yz(sample_dataset(params, secret, 10_000, Rng(5)))
    assert abs(empirical_risk(h, test, "l0") - 0.05) < 0.01


def test_streaming_matches_batch():
    params = TaskParams(16, k=3000)
    secret = sample_zeta(params, Rng(6))
    a, sa = learn_amu_streaming(params, secret, 3000, Rng(7), chunk=700)
    b, sb = learn_amu(sample_dataset(params, secret, 3000, Rng(7), chunk=700), 16)
    assert a == b and np.array_equal(sa.ones, sb.ones)


def test_empty_bins_default_to_zero_and_warn(caplog):
    params = TaskParams(16, theta=0.0)
    secret = Secret(BitVec.from_str("1" * 16))
    data = sample_dataset(params, secret, 200, Rng(8))
    data = data[data.x.idx != 5]
    with caplog.at_level(logging.WARNING):
        h, stats = learn_amu(data, 16)
    assert stats.empty_bins == [5] and h.w_hat[5] == 0
    assert "empty vote bins" in caplog.text
    with pytest.raises(ValueError):
        learn_amu(data[:0], 16)


def test_predict_single_and_batch_agree():
    params = TaskParams(12)
    secret = sample_zeta(params, Rng(9))
    data = sample_dataset(params, secret, 5, Rng(10))
    h = Hypothesis(secret.w)
    batch = h.predict(data.y)
    for i in range(5):
        single = predict(h, data.y[i])
        assert single.zvec == batch[i].zvec and single.zbit == batch[i].zbit


def test_risk_losses():
    params = TaskParams(16, theta=0.0)
    secret = Secret(gf2.uniform_vec(16, Rng(11)))
    test = project_yz(sample_dataset(params, secret, 200, Rng(12)))
    assert empirical_risk(Hypothesis(secret.w), test, "l0") == 0.0
    assert empirical_risk(Hypothesis(secret.w), list(test), "l01") == 0.0
    with pytest.raises(ValueError):
        empirical_risk(Hypothesis(secret.w), test, "l2")


def test_lowweight_attack_finds_planted_and_rejects_uniform():
    params = TaskParams(12)
    secret = Secret(BitVec.from_str("100100000010"))
    pairs = project_yz(sample_dataset(params, secret, 64, Rng(13)))
    out = lowweight_attack(pairs, 12, 4)
    assert out.success and out.secret == secret and not out.budget_exceeded
    fake = project_yz(sample_dataset(params, secret, 64, Rng(13)))
    fake.labels = uniform_zbatch(12, 64, Rng(14))
    assert not lowweight_attack(fake, 12, 6).success


def test_lowweight_budget_flag():
    params = TaskParams(48)
    secret = Secret(gf2.bernoulli_vec(48, 0.3, Rng(15)))
    out = lowweight_attack(project_yz(sample_dataset(params, secret, 16, Rng(16))), 48, 48,
                           budget=100)
    assert out.budget_exceeded and out.evaluated == 100


def test_gauss_attack_low_noise():
    params = TaskParams(24, theta=0.02)
    secret = sample_zeta(TaskParams(24), Rng(17))
    pairs = project_yz(sample_dataset(params, secret, 40, Rng(18)))
    out = gauss_attack(pairs, 24, 200, Rng(19))
    assert out.success and out.secret == secret


def test_toy_parity_learner_and_negation():
    task = ParityToyTask(16)
    concept = task.sample_concept(Rng(20))
    xs, ys = task.sample_unlabeled(None, 64, Rng(21))
    labels = task.label(concept, ys, None)
    h = parity_solver_learner(xs, ys, labels)
    assert np.array_equal(h.predict(ys).bits, labels.bits)
    flipped = BitBatch(1 - labels.bits)
    neg = negate_if_worse(h, ys, flipped)
    assert isinstance(neg, NegatedHypothesis)
    assert np.array_equal(neg.predict(ys).bits, flipped.bits)
    with pytest.raises(TypeError):
        negate_if_worse(h, ys, uniform_zbatch(16, 64, Rng(22)))


def test_bit_learner_low_noise():
    params = TaskParams(16, theta=0.01)
    secret = sample_zeta(TaskParams(16), Rng(23))
    data = sample_dataset(params, secret, 20_000, Rng(24))
    h = amu_bit_learner(data.x, data.y, BitBatch(data.z.zbit))
    assert h.w_hat == secret.w


def test_xz_probe_small_correlation():
    out = xz_independence_probe(TaskParams(16), 50_000, Rng(25))
    assert out["max_abs_corr"] < 0.03
