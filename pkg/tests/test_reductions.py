from __future__ import annotations

import numpy as np
import pytest

from msep import gf2
from msep.rng import Rng
from msep.reductions import (AgreementOracle, ConstantDistinguisher, GradedOracle,
                             LabelCheckingOracle, PlantedAwareCheatLearner,
                             RandomHypothesisLearner, ReductionBudget, UnsupportedLabelSpace,
                             build_dlpn_distinguisher, hybrid_advantage, pmu_identity, pmu_trial,
                             predictor_pmu, sample_hybrid, slice_blocks)
from msep.taskgen import (DlpnInstance, DlpnPublic, Pairs, ParityToyTask, SeparationTask, TaskParams,
                          sample_dlpn)

TOY = ParityToyTask(32)


def test_budget_defaults():
    b = ReductionBudget()
    assert b.p_eval == 8000 and b.threshold == pytest.approx(0.475)
    assert b.columns(TaskParams(16)) == (4096 + 8000) * 16
    with pytest.raises(ValueError):
        ReductionBudget(0)


def test_slice_blocks_match_instance_columns():
    inst = sample_dlpn(8, 40, 0.1, "bernoulli_secret", "planted", Rng(1))
    blocks = slice_blocks(inst.public(), 8, 5)
    bits = inst.A.bits()
    for i in range(5):
        assert np.array_equal(gf2.unpack_bits(blocks.A[i], 8), bits[:, 8 * i:8 * i + 8])
        assert np.array_equal(blocks[i].yvec.bits(), inst.q.bits()[8 * i:8 * i + 8])
    with pytest.raises(ValueError):
        slice_blocks(inst.public(), 8, 6)


class _SpyInstance(DlpnInstance):
    def __getattribute__(self, name):
        if name in ("world", "secret", "secret_mode"):
            raise AssertionError(f"distinguisher read {name}")
        return super().__getattribute__(name)


def test_distinguisher_reads_only_public_part():
    params = TaskParams(8)
    budget = ReductionBudget(t_budget=4, m_train=16)
    inst = sample_dlpn(8, budget.columns(params), params.theta, "bernoulli_secret", "planted",
                       Rng(2))
    d = build_dlpn_distinguisher(RandomHypothesisLearner(Rng(3)), params, budget, Rng(4))
    assert d(DlpnPublic(inst.A, inst.q)) in (0, 1)
    spy = _SpyInstance(inst.A, inst.q, inst.world, inst.secret_mode, inst.theta, inst.secret)
    assert d(spy) in (0, 1)


def test_cheat_learner_separates_worlds_small():
    params = TaskParams(16)
    budget = ReductionBudget(m_train=512)
    outs = {}
    for world in ("planted", "uniform"):
        res = []
        for i in range(8):
            inst = sample_dlpn(16, budget.columns(params), params.theta, "bernoulli_secret",
                               world, Rng(5).child(world, i))
            learner = PlantedAwareCheatLearner(inst.secret, params.theta, Rng(6).child(world, i))
            res.append(build_dlpn_distinguisher(learner, params, budget, Rng(7).child(world, i))(
                inst.public()))
        outs[world] = res
    assert sum(outs["planted"]) >= 7 and sum(outs["uniform"]) <= 1


def test_sample_hybrid_endpoints_and_positions():
    concept = TOY.sample_concept(Rng(8))
    k = 6
    s0 = sample_hybrid(0, k, TOY, concept, Rng(9))
    assert len(s0) == k + 1
    agree = np.zeros(k + 1)
    draws = 2000
    for t in range(draws):
        s = sample_hybrid(3, k, TOY, concept, Rng(10).child("t", t))
        agree += TOY.label(concept, s.inputs, None).bits == s.labels.bits
    rate = agree / draws
    assert np.all(rate[:3] == 1.0)
    assert np.all(np.abs(rate[3:] - 0.5) < 0.05)
    full = sample_hybrid(k + 1, k, TOY, concept, Rng(11))
    assert np.array_equal(TOY.label(concept, full.inputs, None).bits, full.labels.bits)
    with pytest.raises(ValueError):
        sample_hybrid(k + 2, k, TOY, concept, Rng(12))


def test_hybrid_table_constant_and_telescoping():
    concept = TOY.sample_concept(Rng(13))
    const = hybrid_advantage(ConstantDistinguisher(1), TOY, concept, 4, 50, Rng(14))
    assert const.accepts == [50] * 6 and all(d == 0 for d in const.differences)
    table = hybrid_advantage(AgreementOracle(TOY, concept), TOY, concept, 4, 300, Rng(15))
    assert table.telescoped == table.end_to_end
    assert table.estimates[-1] == 1.0 and table.estimates[0] < 0.5
    assert table.to_dict()["telescoping_exact"] is True


def _toy_trial(seed, k=8):
    r = Rng(seed)
    concept = TOY.sample_concept(r.child("c"))
    _, ys = TOY.sample_unlabeled(None, k + 1, r.child("u"))
    labels = TOY.label(concept, ys, None)
    return concept, Pairs(ys[:k], labels[:k]), ys[k:], int(labels.bits[k])


def test_pmu_label_checking_is_perfect():
    for t in range(200):
        concept, train, y_star, truth = _toy_trial(t)
        oracle = LabelCheckingOracle(TOY, concept, train.inputs)
        assert predictor_pmu(oracle, train, (None, y_star), 8, Rng(99).child("p", t)) == truth


def test_pmu_identity_and_graded_oracle():
    recs, truths = [], []
    for t in range(3000):
        concept, train, y_star, truth = _toy_trial(1000 + t)
        oracle = GradedOracle(LabelCheckingOracle(TOY, concept, train.inputs), 0.5,
                              Rng(5).child("g", t))
        recs.append(pmu_trial(oracle, train, (None, y_star), 8, Rng(6).child("p", t)))
        truths.append(truth)
    out = pmu_identity(recs, truths)
    assert out["accuracy"] == pytest.approx(out["weighted_identity"], abs=1e-12)
    assert abs(out["accuracy"] - out["identity"]) < 0.03
    assert abs(out["accuracy"] - 0.75) < 0.03
    assert all(1 <= r.j <= 9 for r in recs)


def test_pmu_rejects_vector_labels():
    task = SeparationTask(TaskParams(8))
    _, ys = task.sample_unlabeled(None, 4, Rng(1))
    labels = task.label(task.sample_concept(Rng(2)), ys, Rng(3))
    with pytest.raises(UnsupportedLabelSpace):
        predictor_pmu(ConstantDistinguisher(), Pairs(ys[:3], labels[:3]), (None, ys[3:]), 3, Rng(4))
