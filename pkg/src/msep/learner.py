"""The bimodal majority-vote learner, risk estimation, and unimodal attack probes.

For a point with ``i = idx`` the vote ``alpha = xvec·zvec + zbit`` expands to
``w_i + xvec·b' + b·w + b''``: the ``xvec·A·w`` terms cancel, so each vote
is the secret bit ``w_i`` masked by three sparse noise parities.
:func:`vote_accuracy` gives the exact probability that a vote is correct.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import gf2
from .gf2 import BitVec, DimensionError
from .rng import Rng
from .taskgen import (DEFAULT_CHUNK, BitBatch, Dataset, DataPoint, LabelZ, ModalityY, Pairs, Secret,
                      TaskParams, VecBatch, YBatch, ZBatch, label_disagreement,
                      apply_phi_batch, apply_psi_batch, sample_chi_batch, sample_dataset,
                      sample_zeta)

log = logging.getLogger(__name__)

DEFAULT_MARGIN = 0.25
DEFAULT_BUDGET = 2560


# ---------------------------------------------------------------------------
# hypotheses


@dataclass(frozen=True)
class Hypothesis:
    """Noise-free predictor ``(A, yvec) -> (A·w_hat, yvec·w_hat)``."""

    w_hat: BitVec

    @property
    def n(self) -> int:
        return len(self.w_hat)

    def predict(self, ys):
        if isinstance(ys, ModalityY):
            return predict(self, ys)
        if ys.n != self.n:
            raise DimensionError("hypothesis / input dimension mismatch")
        zvec = gf2.batch_matrix_times_col(ys.A, self.w_hat.words)
        zbit = gf2.batch_inner(ys.yvec, self.w_hat.words)
        return ZBatch(ys.n, zvec, zbit)


def predict(h: Hypothesis, y: ModalityY) -> LabelZ:
    if y.A.cols != h.n or len(y.yvec) != h.n:
        raise DimensionError("hypothesis / input dimension mismatch")
    return LabelZ(gf2.matrix_times_col(y.A, h.w_hat), gf2.inner(y.yvec, h.w_hat))


@dataclass(frozen=True)
class BitHypothesis:
    """Predicts only the ``zbit`` coordinate (binary-label view of the task)."""

    w_hat: BitVec

    def predict(self, ys: YBatch) -> BitBatch:
        return BitBatch(gf2.batch_inner(ys.yvec, self.w_hat.words))


@dataclass(frozen=True)
class ParityHypothesis:
    w: BitVec

    def predict(self, ys: VecBatch) -> BitBatch:
        return BitBatch(gf2.batch_inner(ys.words, self.w.words))


@dataclass(frozen=True)
class NegatedHypothesis:
    """Flips every prediction of a binary-label hypothesis."""

    inner: object

    def predict(self, ys) -> BitBatch:
        return BitBatch(1 - self.inner.predict(ys).bits)


def negate_if_worse(h, ys, labels: BitBatch, margin: float = 0.05):
    """Return ``h`` negated when its validation error exceeds ``1/2 + margin``.

    Binary labels only.
    """
    if not isinstance(labels, BitBatch):
        raise TypeError("negation is only meaningful for binary labels")
    err = float(np.mean(h.predict(ys).bits != labels.bits))
    return NegatedHypothesis(h) if err > 0.5 + margin else h


# ---------------------------------------------------------------------------
# majority-vote learner


@dataclass
class VoteStats:
    ones: np.ndarray
    zeros: np.ndarray
    empty_bins: list[int] = field(default_factory=list)

    @property
    def bin_sizes(self) -> np.ndarray:
        return self.ones + self.zeros

    @property
    def min_bin_size(self) -> int:
        return int(self.bin_sizes.min())

    @property
    def has_empty_bins(self) -> bool:
        return bool(self.empty_bins)

    def summary(self) -> dict:
        sizes = self.bin_sizes
        return {"min_bin_size": int(sizes.min()), "max_bin_size": int(sizes.max()),
                "total_votes": int(sizes.sum()), "empty_bins": list(self.empty_bins)}


def vote_bits(dataset: Dataset) -> np.ndarray:
    """``alpha_j = xvec_j·zvec_j + zbit_j`` for every point."""
    return gf2.batch_inner(dataset.x.xvec, dataset.z.zvec) ^ dataset.z.zbit


class VoteAccumulator:
    """Streams vote counts so training sets larger than memory can be used."""

    def __init__(self, n: int):
        self.n = n
        self.ones = np.zeros(n, dtype=np.int64)
        self.total = np.zeros(n, dtype=np.int64)

    def add(self, dataset: Dataset) -> None:
        if dataset.n != self.n:
            raise DimensionError(f"dataset n={dataset.n}, learner n={self.n}")
        alpha = vote_bits(dataset)
        self.ones += np.bincount(dataset.x.idx, weights=alpha, minlength=self.n).astype(np.int64)
        self.total += np.bincount(dataset.x.idx, minlength=self.n)

    def finish(self) -> tuple[Hypothesis, VoteStats]:
        zeros = self.total - self.ones
        w_hat = (self.ones > zeros).astype(np.uint8)  # ties -> 0
        empty = [int(i) for i in np.flatnonzero(self.total == 0)]
        if empty:
            log.warning("empty vote bins %s; those secret bits default to 0", empty)
        return Hypothesis(BitVec(self.n, gf2.pack_bits(w_hat))), VoteStats(
            self.ones.copy(), zeros, empty)


def learn_amu(dataset: Dataset | Sequence[DataPoint], n: int) -> tuple[Hypothesis, VoteStats]:
    """Bin points by ``idx`` and take a per-bin majority over the votes."""
    if not isinstance(dataset, Dataset):
        dataset = Dataset.from_points(list(dataset))
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    acc = VoteAccumulator(n)
    acc.add(dataset)
    return acc.finish()


def learn_amu_streaming(params: TaskParams, secret: Secret, k: int, rng: Rng,
                        chunk: int = DEFAULT_CHUNK) -> tuple[Hypothesis, VoteStats]:
    """Sample and learn chunk by chunk.

    Uses the same per-chunk streams as :func:`sample_dataset`, so the result
    equals ``learn_amu(sample_dataset(params, secret, k, rng, chunk=chunk))``
    without holding all ``k`` points in memory.
    """
    acc = VoteAccumulator(params.n)
    for c, start in enumerate(range(0, k, chunk)):
        size = min(chunk, k - start)
        r = rng.child("chunk", c)
        xb = sample_chi_batch(params, size, r)
        yb = apply_phi_batch(params, xb, r)
        acc.add(Dataset(params.n, xb, yb, apply_psi_batch(params, secret, yb, r)))
    return acc.finish()


def amu_learner(xs, ys, labels) -> Hypothesis:
    data = Dataset(ys.n, xs, ys, labels)
    return learn_amu(data, ys.n)[0]


def amu_bit_learner(xs, ys, labels: BitBatch) -> BitHypothesis:
    """Majority vote using only ``zbit``; ``zvec`` is replaced by zeros.

    Without ``zvec`` the ``xvec·A·w`` term no longer cancels, so this learner
    only works in low-noise regimes where ``xvec`` is mostly zero.
    """
    zb = ZBatch(ys.n, np.zeros_like(ys.yvec), labels.bits)
    h, _ = learn_amu(Dataset(ys.n, xs, ys, zb), ys.n)
    return BitHypothesis(h.w_hat)


def parity_solver_learner(xs, ys: VecBatch, labels: BitBatch) -> ParityHypothesis:
    """Exact learner for noise-free parities (Gaussian elimination)."""
    rows = [BitVec(ys.n, ys.words[i]).to_int() for i in range(len(ys))]
    sol = gf2.solve(rows, labels.bits.tolist(), ys.n)
    w = BitVec.from_int(sol or 0, ys.n)
    return ParityHypothesis(w)


def vote_accuracy(n: int, theta: float, secret_weight: int) -> float:
    """Exact probability that one vote equals the secret bit it targets.

    Each noise parity is a sum of independent bits, so
    ``Pr[sum even] = (1 + prod(1 - 2 p_j)) / 2``.
    """
    bias = (1 - 2 * theta * theta) ** n * (1 - 2 * theta) ** secret_weight * (1 - 2 * theta)
    return 0.5 + 0.5 * bias


def mean_vote_accuracy(n: int, theta: float) -> float:
    """:func:`vote_accuracy` averaged over ``|w| ~ Bin(n, theta)``."""
    # E[(1-2θ)^|w|] = (1 - 2θ²)^n for |w| ~ Bin(n, θ)
    return 0.5 + 0.5 * (1 - 2 * theta * theta) ** (2 * n) * (1 - 2 * theta)


# ---------------------------------------------------------------------------
# risk


def empirical_risk(h, test, loss: str = "l0") -> float:
    """Mean loss of ``h`` over ``(y, label)`` pairs.

    ``l0`` is the per-coordinate disagreement rate, ``l01`` exact-match failure.
    """
    if isinstance(test, Pairs):
        ys, labels = test.inputs, test.labels
    else:
        test = list(test)
        if not test:
            raise ValueError("empty test set")
        ys = YBatch.from_items([t[0] for t in test])
        labels = ZBatch.from_items([t[1] for t in test])
    if len(ys) == 0:
        raise ValueError("empty test set")
    dis = label_disagreement(h.predict(ys), labels)
    if loss == "l0":
        return float(dis.mean())
    if loss == "l01":
        return float((dis > 0).mean())
    raise ValueError(f"unknown loss {loss!r}")


# ---------------------------------------------------------------------------
# unimodal attack probes


@dataclass
class AttackOutcome:
    secret: Secret | None
    evaluated: int = 0
    budget_exceeded: bool = False
    best_score: float | None = None
    singular: int = 0

    @property
    def success(self) -> bool:
        return self.secret is not None


def _equations(pairs, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack the rows ``A_i[r]`` and targets ``zvec_i[r]`` of every pair."""
    if isinstance(pairs, Pairs):
        ys, zs = pairs.inputs, pairs.labels
    else:
        pairs = list(pairs)
        ys = YBatch.from_items([p[0] for p in pairs])
        zs = ZBatch.from_items([p[1] for p in pairs])
    if ys.n != n:
        raise DimensionError("pairs / n mismatch")
    rows = ys.A.reshape(-1, ys.A.shape[-1])
    targets = gf2.unpack_bits(zs.zvec, n).reshape(-1)
    return rows, targets


def _candidates(n: int, max_weight: int) -> Iterable[int]:
    for wt in range(max_weight + 1):
        for support in itertools.combinations(range(n), wt):
            yield sum(1 << j for j in support)


def _int_to_words(values: list[int], n: int) -> np.ndarray:
    nb = 8 * gf2.nwords(n)
    raw = b"".join(v.to_bytes(nb, "little") for v in values)
    return np.frombuffer(raw, dtype="<u8").reshape(len(values), -1).astype(np.uint64)


def _score(rows: np.ndarray, targets: np.ndarray, cands: np.ndarray) -> np.ndarray:
    """Disagreement counts of ``rows·cand`` against ``targets`` per candidate."""
    out = np.empty(cands.shape[0], dtype=np.int64)
    step = max(1, (1 << 22) // max(1, rows.shape[0] * rows.shape[1]))
    for s in range(0, cands.shape[0], step):
        c = cands[s:s + step]
        par = gf2.parity(rows[None, :, :] & c[:, None, :])
        out[s:s + step] = (par != targets[None, :]).sum(axis=1)
    return out


def lowweight_attack(pairs, n: int, max_weight: int, budget: int = DEFAULT_BUDGET,
                     margin: float = DEFAULT_MARGIN) -> AttackOutcome:
    """Enumerate secrets of weight ``<= max_weight`` in weight order and score them.

    The score is the fraction of ``A·w_hat`` bits disagreeing with ``zvec``.
    The best candidate is accepted when its score is below
    ``0.5 * (1 - margin)``.  Enumeration stops after ``budget`` candidates
    and the outcome is flagged ``budget_exceeded``.
    """
    if not 0 <= max_weight <= n:
        raise ValueError("max_weight must lie in [0, n]")
    rows, targets = _equations(pairs, n)
    total = sum(math.comb(n, i) for i in range(max_weight + 1))
    exceeded = total > budget
    cands = list(itertools.islice(_candidates(n, max_weight), min(total, budget)))
    words = _int_to_words(cands, n)
    scores = _score(rows, targets, words)
    best = int(np.argmin(scores))
    frac = float(scores[best]) / targets.shape[0]
    secret = None
    if frac < 0.5 * (1 - margin):
        secret = Secret(BitVec.from_int(cands[best], n))
    return AttackOutcome(secret, len(cands), exceeded, frac)


def gauss_attack(pairs, n: int, trials: int, rng: Rng,
                 margin: float = DEFAULT_MARGIN) -> AttackOutcome:
    """Information-set decoding: solve ``n`` random equations, validate on the rest."""
    rows, targets = _equations(pairs, n)
    total = rows.shape[0]
    if total < 2 * n:
        raise ValueError(f"need >= {2 * n} equations, have {total}")
    row_ints = [int.from_bytes(r.tobytes(), "little") for r in np.ascontiguousarray(rows, "<u8")]
    tlist = targets.tolist()
    singular = 0
    for t in range(trials):
        pick = rng.gen.choice(total, size=n, replace=False)
        sol = gf2.solve([row_ints[i] for i in pick], [tlist[i] for i in pick], n)
        if sol is None:
            singular += 1
            continue
        cand = _int_to_words([sol], n)
        frac = float(_score(rows, targets, cand)[0]) / total
        if frac < 0.5 * (1 - margin):
            return AttackOutcome(Secret(BitVec.from_int(sol, n)), t + 1, False, frac, singular)
    return AttackOutcome(None, trials, True, None, singular)


def xz_independence_probe(params: TaskParams, count: int, rng: Rng) -> dict:
    """Max |Pearson correlation| between ``xvec`` bits and ``zvec`` bits."""
    secret = sample_zeta(params, rng.child("secret"))
    data = sample_dataset(params, secret, count, rng.child("data"))
    xb = gf2.unpack_bits(data.x.xvec, params.n).astype(np.float64)
    zb = gf2.unpack_bits(data.z.zvec, params.n).astype(np.float64)
    xc = xb - xb.mean(axis=0)
    zc = zb - zb.mean(axis=0)
    xs = np.sqrt((xc ** 2).sum(axis=0))
    zs = np.sqrt((zc ** 2).sum(axis=0))
    denom = np.outer(xs, zs)
    cov = xc.T @ zc
    corr = np.divide(cov, denom, out=np.zeros_like(cov), where=denom > 0)
    return {"count": count, "max_abs_corr": float(np.abs(corr).max()),
            "mean_abs_corr": float(np.abs(corr).mean())}
