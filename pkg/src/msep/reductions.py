"""Executable reductions: learner -> DLPN distinguisher, hybrids, next-bit predictor.

Hybrid convention, used everywhere in this module: ``H_j`` carries true labels
at positions ``p < j`` and uniform labels at positions ``p >= j``.  ``H_0`` is
all-uniform and ``H_{k+1}`` is all-real.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable

import numpy as np

from . import gf2
from .gf2 import BitVec, DimensionError
from .learner import Hypothesis, gauss_attack
from .rng import Rng
from .taskgen import (BimodalTask, BitBatch, DlpnInstance, DlpnPublic, LabelSpace, ModalityY,
                      Pairs, TaskParams, VecBatch, YBatch, ZBatch, apply_psi_batch,
                      label_disagreement, sample_zeta)


class UnsupportedLabelSpace(TypeError):
    pass


# ---------------------------------------------------------------------------
# unimodal learners


class UnimodalLearner(abc.ABC):
    """Trains on ``(y, z)`` pairs only; never sees the ``x`` modality."""

    @abc.abstractmethod
    def train(self, ys: YBatch, zs: ZBatch) -> Any: ...


class RandomHypothesisLearner(UnimodalLearner):
    """Ignores its data and returns a hypothesis with a uniform secret."""

    def __init__(self, rng: Rng):
        self.rng = rng
        self.calls = 0

    def train(self, ys, zs) -> Hypothesis:
        r = self.rng.child("train", self.calls)
        self.calls += 1
        return Hypothesis(gf2.uniform_vec(ys.n, r))


class PlantedAwareCheatLearner(UnimodalLearner):
    """Test oracle that is handed the DLPN secret ``x``.

    When the training inputs look planted (``yvec + x·A`` has low weight on
    average) it recovers ``w`` from the ``zvec`` side by information-set
    decoding.  Otherwise it answers with a random hypothesis.  Labels are
    ``psi_w``-generated in both worlds, so only the planted check separates
    them; a learner that always recovered ``w`` would have no advantage.
    """

    def __init__(self, lpn_secret: BitVec, theta: float, rng: Rng, *,
                 probe_blocks: int = 64, attack_pairs: int = 64, attack_trials: int = 4000):
        self.x = lpn_secret
        self.theta = theta
        self.rng = rng
        self.probe_blocks = probe_blocks
        self.attack_pairs = attack_pairs
        self.attack_trials = attack_trials
        self.calls = 0

    def looks_planted(self, ys: YBatch) -> bool:
        n = ys.n
        probe = ys[: self.probe_blocks]
        resid = probe.yvec ^ gf2.batch_row_times_matrix(self.x.words, probe.A)
        mean_wt = float(np.bitwise_count(resid).sum(axis=-1).mean())
        # planted: Ber(theta)^n plus one flipped bit; uniform: n/2
        planted = n * self.theta + (1 - 2 * self.theta)
        return mean_wt < 0.5 * (planted + n / 2)

    def train(self, ys, zs) -> Hypothesis:
        r = self.rng.child("train", self.calls)
        self.calls += 1
        if self.looks_planted(ys):
            k = min(len(ys), self.attack_pairs)
            out = gauss_attack(Pairs(ys[:k], zs[:k]), ys.n, self.attack_trials, r.child("attack"))
            if out.success:
                return Hypothesis(out.secret.w)
        return Hypothesis(gf2.uniform_vec(ys.n, r.child("fallback")))


# ---------------------------------------------------------------------------
# learner -> DLPN distinguisher


@dataclass(frozen=True)
class ReductionBudget:
    """Finite stand-ins for the asymptotic budgets: ``t_budget`` and ``p_eval = t³``."""

    t_budget: int = 20
    m_train: int | None = None
    p_eval: int | None = None

    def __post_init__(self):
        if self.t_budget < 1:
            raise ValueError("t_budget must be positive")
        if self.p_eval is None:
            object.__setattr__(self, "p_eval", self.t_budget ** 3)
        if self.p_eval < 1 or (self.m_train is not None and self.m_train < 1):
            raise ValueError("budgets must be positive")

    @property
    def threshold(self) -> float:
        return 0.5 - 1.0 / (2 * self.t_budget)

    def train_size(self, params: TaskParams) -> int:
        return self.m_train if self.m_train is not None else params.k

    def columns(self, params: TaskParams) -> int:
        """DLPN columns one distinguisher call consumes."""
        return (self.train_size(params) + self.p_eval) * params.n


def slice_blocks(pub: DlpnPublic, n: int, count: int) -> YBatch:
    """Cut ``(A, q)`` into ``count`` contiguous ``n``-column blocks ``(Y_i, q_i)``."""
    if pub.A.rows != n:
        raise DimensionError(f"instance has {pub.A.rows} rows, expected {n}")
    need = count * n
    if pub.A.cols < need or len(pub.q) < need:
        raise ValueError(f"instance has {pub.A.cols} columns, need {need}")
    bits = pub.A.bits()[:, :need].reshape(n, count, n).transpose(1, 0, 2)
    a = gf2.pack_bits(bits)
    q = gf2.pack_bits(pub.q.bits()[:need].reshape(count, n))
    return YBatch(n, a, q)


def build_dlpn_distinguisher(learner: UnimodalLearner, params: TaskParams,
                             budget: ReductionBudget, rng: Rng) -> Callable[[DlpnPublic], int]:
    """Turn a unimodal learner into a DLPN distinguisher.

    Each call slices the instance into ``m + p_eval`` blocks, negates one
    random bit of every ``q_i`` (simulating the ``e_idx`` term), labels all
    blocks with a freshly drawn ``psi_w``, trains on the first ``m`` and
    outputs 1 iff the held-out disagreement is at most ``budget.threshold``.
    Only ``(A, q)`` is read; a full instance is stripped to its public part.
    """
    n = params.n
    m = budget.train_size(params)
    total = m + budget.p_eval
    calls = [0]

    def distinguish(instance: DlpnPublic | DlpnInstance) -> int:
        pub = instance.public() if isinstance(instance, DlpnInstance) else instance
        r = rng.child("call", calls[0])
        calls[0] += 1
        blocks = slice_blocks(pub, n, total)
        flip = r.randbelow(n, size=total)
        onehot = gf2.pack_bits(np.eye(n, dtype=np.uint8)[flip])
        ys = YBatch(n, blocks.A, blocks.yvec ^ onehot)
        secret = sample_zeta(params, r.child("concept"))
        zs = apply_psi_batch(params, secret, ys, r.child("label"))
        h = learner.train(ys[:m], zs[:m])
        dis = label_disagreement(h.predict(ys[m:]), zs[m:])
        return int(float(dis.mean()) <= budget.threshold)

    return distinguish


# ---------------------------------------------------------------------------
# transcript distinguishers


class TranscriptDistinguisher(abc.ABC):
    @abc.abstractmethod
    def decide(self, seq: Pairs) -> int: ...

    def __call__(self, seq: Pairs) -> int:
        return self.decide(seq)


class ConstantDistinguisher(TranscriptDistinguisher):
    def __init__(self, value: int = 0):
        self.value = int(value)

    def decide(self, seq) -> int:
        return self.value


def _keys(ys) -> list[bytes]:
    words = ys.words if isinstance(ys, VecBatch) else np.concatenate(
        [ys.A.reshape(len(ys), -1), ys.yvec], axis=1)
    return [row.tobytes() for row in np.ascontiguousarray(words)]


class LabelCheckingOracle(TranscriptDistinguisher):
    """Knows the concept and the caller's training inputs.

    Locates the one slot whose input is not a training input and outputs 0
    iff that slot's label equals the true (noise-free) label.
    """

    def __init__(self, task: BimodalTask, concept, known_ys):
        self.task = task
        self.concept = concept
        self.known = set(_keys(known_ys))

    def decide(self, seq: Pairs) -> int:
        fresh = [i for i, key in enumerate(_keys(seq.inputs)) if key not in self.known]
        if len(fresh) != 1:
            raise ValueError(f"expected exactly one unseen slot, found {len(fresh)}")
        i = fresh[0]
        truth = self.task.label(self.concept, seq.inputs[i:i + 1], None).bits[0]
        return int(seq.labels.bits[i] != truth)


class AgreementOracle(TranscriptDistinguisher):
    """Outputs 1 iff at least ``threshold`` of the labels match the concept."""

    def __init__(self, task: BimodalTask, concept, threshold: float = 0.75):
        self.task = task
        self.concept = concept
        self.threshold = threshold

    def decide(self, seq: Pairs) -> int:
        truth = self.task.label(self.concept, seq.inputs, None).bits
        return int(float(np.mean(truth == seq.labels.bits)) >= self.threshold)


class GradedOracle(TranscriptDistinguisher):
    """Defers to ``base`` with probability ``eps``, else flips a coin."""

    def __init__(self, base: TranscriptDistinguisher, eps: float, rng: Rng):
        if not 0.0 <= eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")
        self.base = base
        self.eps = eps
        self.rng = rng
        self.calls = 0

    def decide(self, seq) -> int:
        r = self.rng.child("call", self.calls)
        self.calls += 1
        if r.gen.random() < self.eps:
            return self.base.decide(seq)
        return r.bit()


# ---------------------------------------------------------------------------
# hybrids


def _require_binary(labels) -> None:
    if not isinstance(labels, BitBatch):
        raise UnsupportedLabelSpace("only binary label spaces are supported")


def _concat(parts):
    return type(parts[0]).concat(parts)


def _as_batch(y):
    if isinstance(y, BitVec):
        return VecBatch(len(y), y.words[None, :])
    if isinstance(y, ModalityY):
        return YBatch.from_items([y])
    return y


def mix_labels(real, uniform, mask: np.ndarray):
    """Take ``real`` where ``mask`` is true, else ``uniform``."""
    if isinstance(real, BitBatch):
        return BitBatch(np.where(mask, real.bits, uniform.bits).astype(np.uint8))
    if isinstance(real, ZBatch):
        return ZBatch(real.n, np.where(mask[:, None], real.zvec, uniform.zvec),
                      np.where(mask, real.zbit, uniform.zbit).astype(np.uint8))
    raise TypeError(f"cannot mix {type(real).__name__}")


def sample_hybrid(j: int, k: int, task: BimodalTask, concept, rng: Rng,
                  mapping: Any = None) -> Pairs:
    """One draw from ``H_j``: ``k + 1`` pairs, true labels strictly before ``j``."""
    if not 0 <= j <= k + 1:
        raise ValueError(f"j must lie in [0, {k + 1}]")
    _, ys = task.sample_unlabeled(mapping, k + 1, rng.child("inputs"))
    real = task.label(concept, ys, rng.child("real"))
    uniform = task.random_labels(k + 1, rng.child("uniform"))
    return Pairs(ys, mix_labels(real, uniform, np.arange(k + 1) < j))


@dataclass
class HybridTable:
    """Acceptance counts ``c_j`` of ``D'`` on ``H_0 .. H_{k+1}`` over ``trials`` draws."""

    k: int
    trials: int
    accepts: list[int]

    @property
    def estimates(self) -> list[float]:
        return [c / self.trials for c in self.accepts]

    @property
    def differences(self) -> list[Fraction]:
        return [Fraction(self.accepts[j] - self.accepts[j - 1], self.trials)
                for j in range(1, self.k + 2)]

    @property
    def telescoped(self) -> Fraction:
        return sum(self.differences, Fraction(0))

    @property
    def end_to_end(self) -> Fraction:
        return Fraction(self.accepts[-1] - self.accepts[0], self.trials)

    @property
    def mean_difference(self) -> float:
        return float(self.telescoped) / (self.k + 1)

    def to_dict(self) -> dict:
        return {"k": self.k, "trials": self.trials, "accepts": list(self.accepts),
                "estimates": self.estimates,
                "differences": [float(d) for d in self.differences],
                "telescoped": float(self.telescoped), "end_to_end": float(self.end_to_end),
                "telescoping_exact": self.telescoped == self.end_to_end,
                "mean_difference": self.mean_difference}


def hybrid_advantage(dprime: Callable[[Pairs], int], task: BimodalTask, concept, k: int,
                     trials: int, rng: Rng, mapping: Any = None) -> HybridTable:
    """Estimate ``Pr[D'(H_j) = 1]`` for every ``j`` from integer accept counts."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    accepts = []
    size = k + 1
    mask = np.arange(size) < 0
    for j in range(k + 2):
        r = rng.child("hybrid", j)
        _, ys = task.sample_unlabeled(mapping, trials * size, r.child("inputs"))
        real = task.label(concept, ys, r.child("real"))
        uniform = task.random_labels(trials * size, r.child("uniform"))
        mask = np.tile(np.arange(size) < j, trials)
        labels = mix_labels(real, uniform, mask)
        count = 0
        for t in range(trials):
            sl = slice(t * size, (t + 1) * size)
            count += int(dprime(Pairs(ys[sl], labels[sl])))
        accepts.append(count)
    return HybridTable(k, trials, accepts)


# ---------------------------------------------------------------------------
# next-bit predictor


@dataclass(frozen=True)
class PmuTrial:
    j: int
    b_j: int
    d_out: int

    @property
    def prediction(self) -> int:
        return self.d_out ^ self.b_j


def pmu_trial(dprime: Callable[[Pairs], int], train: Pairs, target, k: int,
              rng: Rng) -> PmuTrial:
    """One run of the predictor, exposing ``j``, ``b_j`` and ``D'``'s output."""
    _require_binary(train.labels)
    if len(train) != k:
        raise DimensionError(f"expected {k} training samples, got {len(train)}")
    _, y_star = target
    y_star = _as_batch(y_star)
    j = int(rng.randbelow(k + 1)) + 1  # uniform in [1, k+1]
    slot = j - 1
    coins = (rng.raw(k + 1) >> np.uint64(63)).astype(np.uint8)
    b_j = int(coins[slot])
    ys = _concat([train.inputs[:slot], y_star, train.inputs[slot:]])
    # slots before the challenge keep their true labels; later slots get fresh coins
    bits = np.concatenate([train.labels.bits[:slot], [b_j], coins[slot + 1:]]).astype(np.uint8)
    d_out = int(dprime(Pairs(ys, BitBatch(bits))))
    return PmuTrial(j, b_j, d_out)


def predictor_pmu(dprime: Callable[[Pairs], int], train: Pairs, target, k: int,
                  rng: Rng) -> int:
    """Predict the label of ``target`` as ``D'(s') xor b_j``."""
    return pmu_trial(dprime, train, target, k, rng).prediction


def pmu_identity(trials: list[PmuTrial], truths: list[int]) -> dict:
    """Compare direct accuracy with ``1/2 + (Pr[D'=0 | b_j right] - Pr[D'=0 | b_j wrong]) / 2``."""
    right = [t.d_out == 0 for t, z in zip(trials, truths) if t.b_j == z]
    wrong = [t.d_out == 0 for t, z in zip(trials, truths) if t.b_j != z]
    acc = float(np.mean([t.prediction == z for t, z in zip(trials, truths)]))
    p_right = float(np.mean(right)) if right else 0.0
    p_wrong = float(np.mean(wrong)) if wrong else 0.0
    n_r, n_w = len(right), len(wrong)
    # the identity holds exactly when both branches are weighted by their empirical share
    weighted = (n_r * p_right + n_w * (1 - p_wrong)) / max(1, n_r + n_w)
    return {"accuracy": acc, "p0_right": p_right, "p0_wrong": p_wrong,
            "identity": 0.5 + 0.5 * (p_right - p_wrong), "weighted_identity": weighted}
