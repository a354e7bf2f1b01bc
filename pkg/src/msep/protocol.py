"""Bit agreement from the bimodal task, its amplification to keys, and eavesdroppers.

One session::

    Alice                                   Bob
    x_i ~ chi, y_i = phi(x_i), i <= k+1
                  -- Msg1: y_1..y_{k+1} -->
                                            b_B ~ {0,1}
                                            b_B = 1: z_i = psi(y_i), psi ~ zeta
                                            b_B = 0: z_i uniform
                  <-- Msg2: z_1..z_{k+1} --
    learn h on (x_i, y_i, z_i)_{i<=k}
    b_A = rule(h(y_{k+1}) vs z_{k+1})

Every message crosses the channel as a :mod:`msep.wire` frame, and the
transcript is exactly the list of frames.
"""

from __future__ import annotations

import enum
import socket
import threading
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.stats import binomtest

from . import gf2, wire
from .learner import (DEFAULT_BUDGET, DEFAULT_MARGIN, AttackOutcome, BitHypothesis, Hypothesis,
                      lowweight_attack)
from .rng import Rng
from .taskgen import (BimodalTask, BitBatch, Pairs, SeparationTask, TaskParams, YBatch, ZBatch,
                      label_disagreement)


class ProtocolError(RuntimeError):
    pass


def as_task(spec: TaskParams | BimodalTask) -> BimodalTask:
    return SeparationTask(spec) if isinstance(spec, TaskParams) else spec


# ---------------------------------------------------------------------------
# decision rule


@dataclass(frozen=True)
class DecisionRule:
    """``exact``: ``b_A = 1`` iff the held-out label is predicted exactly.
    ``threshold``: ``b_A = 1`` iff the normalized disagreement is ``<= tau``.
    """

    kind: str = "threshold"
    tau: float = 0.25

    def __post_init__(self):
        if self.kind not in ("exact", "threshold"):
            raise ValueError(f"unknown decision rule {self.kind!r}")
        if not 0.0 <= self.tau < 1.0:
            raise ValueError("tau must lie in [0, 1)")

    @classmethod
    def exact(cls) -> "DecisionRule":
        return cls("exact", 0.0)

    @classmethod
    def threshold(cls, tau: float = 0.25) -> "DecisionRule":
        return cls("threshold", tau)

    def decide(self, disagreement: float) -> int:
        if self.kind == "exact":
            return int(disagreement == 0)
        return int(disagreement <= self.tau)

    @property
    def name(self) -> str:
        return "exact" if self.kind == "exact" else f"threshold({self.tau:g})"


# ---------------------------------------------------------------------------
# messages


@dataclass(eq=False)
class Msg1:
    ys: Any

    def __len__(self) -> int:
        return len(self.ys)

    def to_frame(self) -> bytes:
        return wire.encode_frame(wire.Tag.MSG1, wire.encode_batch(self.ys))

    @classmethod
    def from_frame(cls, frame: bytes) -> "Msg1":
        tag, payload = _decode(frame)
        if tag is not wire.Tag.MSG1:
            raise ProtocolError(f"expected Msg1, got {tag.name}")
        return cls(_decode_batch(payload))


@dataclass(eq=False)
class Msg2:
    labels: Any

    def __len__(self) -> int:
        return len(self.labels)

    def to_frame(self) -> bytes:
        return wire.encode_frame(wire.Tag.MSG2, wire.encode_batch(self.labels))

    @classmethod
    def from_frame(cls, frame: bytes) -> "Msg2":
        tag, payload = _decode(frame)
        if tag is not wire.Tag.MSG2:
            raise ProtocolError(f"expected Msg2, got {tag.name}")
        return cls(_decode_batch(payload))


def _decode(frame: bytes):
    try:
        return wire.decode_frame(frame)
    except (wire.WireError, ValueError) as exc:
        raise ProtocolError(f"malformed frame: {exc}") from exc


def _decode_batch(payload: bytes):
    try:
        return wire.decode_batch(payload)
    except wire.WireError as exc:
        raise ProtocolError(f"malformed payload: {exc}") from exc


@dataclass(frozen=True)
class Transcript:
    """What an eavesdropper sees: the frames in wire order plus public metadata."""

    session_id: int
    params: dict
    frames: tuple[bytes, ...]

    def wire_bytes(self) -> bytes:
        return b"".join(self.frames)

    def messages(self) -> list[tuple[wire.Tag, bytes]]:
        return list(wire.iter_frames(self.wire_bytes()))

    def msg1(self) -> Msg1:
        return Msg1(wire.decode_batch(self._payload(wire.Tag.MSG1)))

    def msg2(self) -> Msg2:
        return Msg2(wire.decode_batch(self._payload(wire.Tag.MSG2)))

    def _payload(self, tag: wire.Tag) -> bytes:
        for t, payload in self.messages():
            if t is tag:
                return payload
        raise ProtocolError(f"transcript has no {tag.name} frame")


@dataclass(frozen=True)
class SessionResult:
    b_A: int
    b_B: int
    alice_disagreement: float
    decision_rule: str

    @property
    def agree(self) -> bool:
        return self.b_A == self.b_B


# ---------------------------------------------------------------------------
# protocol steps


@dataclass(eq=False)
class AliceState:
    task: BimodalTask
    k: int
    xs: Any
    ys: Any


def alice_round1(params: TaskParams | BimodalTask, k: int, rng: Rng) -> tuple[AliceState, Msg1]:
    """Sample ``k + 1`` unlabeled pairs; keep the ``x`` side, send the ``y`` side."""
    if k < 1:
        raise ValueError("k must be >= 1")
    task = as_task(params)
    mapping = task.sample_mapping(rng.child("mapping"))
    xs, ys = task.sample_unlabeled(mapping, k + 1, rng.child("data"))
    return AliceState(task, k, xs, ys), Msg1(ys)


def bob_round2(params: TaskParams | BimodalTask, msg1: Msg1, rng: Rng) -> tuple[int, Msg2]:
    """Flip ``b_B``; label with a fresh concept if it is 1, uniformly otherwise."""
    task = as_task(params)
    if len(msg1) < 2 or msg1.ys.n != task.n:
        raise ProtocolError("malformed Msg1")
    b_b = rng.child("coin").bit()
    if b_b:
        concept = task.sample_concept(rng.child("concept"))
        labels = task.label(concept, msg1.ys, rng.child("label"))
    else:
        labels = task.random_labels(len(msg1), rng.child("uniform"))
    return b_b, Msg2(labels)


def alice_finish(state: AliceState, msg2: Msg2, rule: DecisionRule,
                 learner: Callable | None = None) -> tuple[int, float]:
    """Train on the first ``k`` triples and judge the held-out one.  Returns ``(b_A, disagreement)``."""
    k = state.k
    if len(msg2) != k + 1:
        raise ProtocolError(f"Msg2 has {len(msg2)} labels, expected {k + 1}")
    learner = learner or state.task.default_learner()
    h = learner(state.xs[:k], state.ys[:k], msg2.labels[:k])
    dis = float(label_disagreement(h.predict(state.ys[k:]), msg2.labels[k:])[0])
    return rule.decide(dis), dis


def random_learner(rng: Rng) -> Callable:
    """Sabotaged learner: ignores its data and returns a uniform hypothesis."""
    calls = [0]

    def learn(xs, ys, labels):
        r = rng.child("call", calls[0])
        calls[0] += 1
        h = Hypothesis(gf2.uniform_vec(ys.n, r))
        if isinstance(labels, BitBatch):
            return BitHypothesis(h.w_hat)
        return h

    return learn


# ---------------------------------------------------------------------------
# state machines


class _Phase(enum.Enum):
    IDLE = "idle"
    WAIT = "wait"
    DONE = "done"


class Alice:
    def __init__(self, task: BimodalTask, k: int, rng: Rng, rule: DecisionRule,
                 learner: Callable | None = None):
        self.task, self.k, self.rng, self.rule, self.learner = task, k, rng, rule, learner
        self.phase = _Phase.IDLE
        self.state: AliceState | None = None
        self.b_A: int | None = None
        self.disagreement: float | None = None

    def start(self) -> bytes:
        if self.phase is not _Phase.IDLE:
            raise ProtocolError("Alice already started")
        self.state, msg1 = alice_round1(self.task, self.k, self.rng)
        self.phase = _Phase.WAIT
        return msg1.to_frame()

    def receive(self, frame: bytes) -> None:
        if self.phase is not _Phase.WAIT:
            raise ProtocolError(f"Alice not expecting a message in phase {self.phase.value}")
        msg2 = Msg2.from_frame(frame)
        self.b_A, self.disagreement = alice_finish(self.state, msg2, self.rule, self.learner)
        self.phase = _Phase.DONE


class Bob:
    def __init__(self, task: BimodalTask, rng: Rng):
        self.task, self.rng = task, rng
        self.phase = _Phase.WAIT
        self.b_B: int | None = None

    def receive(self, frame: bytes) -> bytes:
        if self.phase is not _Phase.WAIT:
            raise ProtocolError("Bob already answered")
        msg1 = Msg1.from_frame(frame)
        self.b_B, msg2 = bob_round2(self.task, msg1, self.rng)
        self.phase = _Phase.DONE
        return msg2.to_frame()


class InProcessChannel:
    """Reliable in-order channel that records every frame it carries."""

    def __init__(self):
        self.log: list[bytes] = []

    def carry(self, frame: bytes) -> bytes:
        self.log.append(frame)
        return frame


def _echo(task: BimodalTask, k: int, rule: DecisionRule) -> dict:
    return task.describe() | {"k_session": k, "rule": rule.name}


def run_transcript_only(params: TaskParams | BimodalTask, k: int, rng: Rng,
                        session_id: int = 0) -> tuple[int, Transcript]:
    """Rounds 1 and 2 only: Bob's bit and the eavesdropper's view."""
    task = as_task(params)
    alice = Alice(task, k, rng.child("alice"), DecisionRule())
    bob = Bob(task, rng.child("bob"))
    chan = InProcessChannel()
    chan.carry(bob.receive(chan.carry(alice.start())))
    return bob.b_B, Transcript(session_id, _echo(task, k, DecisionRule()), tuple(chan.log))


def run_ba_session(params: TaskParams | BimodalTask, k: int, rule: DecisionRule, rng: Rng, *,
                   learner: Callable | None = None,
                   session_id: int = 0) -> tuple[SessionResult, Transcript]:
    task = as_task(params)
    alice = Alice(task, k, rng.child("alice"), rule, learner)
    bob = Bob(task, rng.child("bob"))
    chan = InProcessChannel()
    reply = bob.receive(chan.carry(alice.start()))
    alice.receive(chan.carry(reply))
    result = SessionResult(alice.b_A, bob.b_B, alice.disagreement, rule.name)
    return result, Transcript(session_id, _echo(task, k, rule), tuple(chan.log))


def run_ba_socket(params: TaskParams | BimodalTask, k: int, rule: DecisionRule, rng: Rng, *,
                  learner: Callable | None = None,
                  session_id: int = 0) -> tuple[SessionResult, Transcript]:
    """Same session with Bob on a thread across a local socket pair."""
    task = as_task(params)
    alice = Alice(task, k, rng.child("alice"), rule, learner)
    bob = Bob(task, rng.child("bob"))
    a_sock, b_sock = socket.socketpair()
    errors: list[BaseException] = []

    def serve():
        try:
            with b_sock, b_sock.makefile("rwb") as fh:
                wire.write_frame(fh, bob.receive(wire.read_frame(fh)))
        except BaseException as exc:  # surfaced in the caller
            errors.append(exc)

    worker = threading.Thread(target=serve, daemon=True)
    worker.start()
    with a_sock, a_sock.makefile("rwb") as fh:
        first = alice.start()
        wire.write_frame(fh, first)
        reply = wire.read_frame(fh)
    worker.join()
    if errors:
        raise errors[0]
    alice.receive(reply)
    result = SessionResult(alice.b_A, bob.b_B, alice.disagreement, rule.name)
    return result, Transcript(session_id, _echo(task, k, rule), (first, reply))


# ---------------------------------------------------------------------------
# key agreement


def toeplitz_extract(raw_bits, hash_seed, out_len: int) -> np.ndarray:
    """``T · raw`` over Z_2 with ``T[i, j] = seed[i - j + len(raw) - 1]``.

    ``hash_seed`` must hold ``len(raw) + out_len - 1`` bits.
    """
    raw = np.asarray(raw_bits, dtype=np.uint8)
    seed = np.asarray(hash_seed, dtype=np.uint8)
    m = raw.shape[0]
    if out_len < 0 or out_len > m:
        raise ValueError(f"out_len must lie in [0, {m}]")
    if out_len == 0:
        return np.zeros(0, dtype=np.uint8)
    if seed.shape[0] != m + out_len - 1:
        raise ValueError(f"seed must hold {m + out_len - 1} bits, got {seed.shape[0]}")
    full = np.convolve(seed.astype(np.int64), raw.astype(np.int64))
    return (full[m - 1:m - 1 + out_len] & 1).astype(np.uint8)


@dataclass(eq=False)
class KaResult:
    key_A: np.ndarray
    key_B: np.ndarray
    raw_A: np.ndarray
    raw_B: np.ndarray
    extractor_seed: np.ndarray
    sessions: list[SessionResult] = field(repr=False, default_factory=list)

    @property
    def raw_errors(self) -> int:
        return int(np.count_nonzero(self.raw_A != self.raw_B))

    @property
    def keys_equal(self) -> bool:
        return bool(np.array_equal(self.key_A, self.key_B))


def run_ka(params: TaskParams | BimodalTask, k: int, m_sessions: int, key_len: int,
           rule: DecisionRule, rng: Rng, *, learner: Callable | None = None,
           keep_transcripts: bool = True) -> tuple[KaResult, list[Transcript]]:
    """``m_sessions`` independent bit agreements, then a shared Toeplitz hash.

    No reconciliation is run: any raw-bit disagreement is left to show up
    as a key mismatch.  The extractor seed travels as a final public frame.
    """
    if m_sessions < 1:
        raise ValueError("m_sessions must be >= 1")
    if not 0 <= key_len <= m_sessions:
        raise ValueError(f"key_len must lie in [0, {m_sessions}]")
    task = as_task(params)
    results, transcripts = [], []
    for s in range(m_sessions):
        res, tr = run_ba_session(task, k, rule, rng.child("session", s), learner=learner,
                                 session_id=s)
        results.append(res)
        if keep_transcripts:
            transcripts.append(tr)
    raw_a = np.array([r.b_A for r in results], dtype=np.uint8)
    raw_b = np.array([r.b_B for r in results], dtype=np.uint8)
    seed_len = m_sessions + key_len - 1 if key_len else 0
    seed = (rng.child("extractor").raw(seed_len) >> np.uint64(63)).astype(np.uint8)
    seed_frame = wire.encode_frame(wire.Tag.EXTRACTOR_SEED, wire.encode_seed(seed))
    transcripts.append(Transcript(m_sessions, _echo(task, k, rule) | {"extractor": True},
                                  (seed_frame,)))
    public_seed = wire.decode_seed(wire.decode_frame(seed_frame)[1])
    key_a = toeplitz_extract(raw_a, public_seed, key_len)
    key_b = toeplitz_extract(raw_b, public_seed, key_len)
    return KaResult(key_a, key_b, raw_a, raw_b, seed, results), transcripts


# ---------------------------------------------------------------------------
# eavesdroppers


@dataclass(frozen=True)
class AccuracyReport:
    sessions: int
    correct: int
    ci_low: float
    ci_high: float

    @property
    def accuracy(self) -> float:
        return self.correct / self.sessions

    def to_dict(self) -> dict:
        return {"sessions": self.sessions, "correct": self.correct, "accuracy": self.accuracy,
                "wilson_95": [self.ci_low, self.ci_high]}


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(successes, trials).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def coin_flip_adversary(rng: Rng) -> Callable[[Transcript], int]:
    def guess(transcript: Transcript) -> int:
        return rng.child("guess", transcript.session_id).bit()

    return guess


class LowWeightAdversary:
    """Reads ``(Y_i, zvec_i)`` off the wire and runs :func:`lowweight_attack`.

    Guesses ``b_B = 1`` iff a low-weight secret explains the labels.
    """

    def __init__(self, n: int, max_weight: int, budget: int = DEFAULT_BUDGET,
                 pairs: int = 64, margin: float = DEFAULT_MARGIN):
        self.n, self.max_weight, self.budget = n, max_weight, budget
        self.pairs, self.margin = pairs, margin
        self.last: AttackOutcome | None = None

    def __call__(self, transcript: Transcript) -> int:
        ys, zs = transcript.msg1().ys, transcript.msg2().labels
        if not isinstance(ys, YBatch) or not isinstance(zs, ZBatch):
            raise ProtocolError("low-weight adversary needs vector labels")
        p = min(self.pairs, len(ys))
        self.last = lowweight_attack(Pairs(ys[:p], zs[:p]), self.n, self.max_weight,
                                     self.budget, self.margin)
        return int(self.last.success)


def adversary_harness(adversary: Callable[[Transcript], int], params: TaskParams | BimodalTask,
                      k: int, sessions: int, rng: Rng) -> AccuracyReport:
    """Accuracy of ``adversary`` at guessing ``b_B`` from transcripts alone."""
    if sessions < 1:
        raise ValueError("sessions must be >= 1")
    task = as_task(params)
    correct = 0
    for s in range(sessions):
        b_b, tr = run_transcript_only(task, k, rng.child("session", s), session_id=s)
        correct += int(adversary(tr) == b_b)
    lo, hi = wilson_interval(correct, sessions)
    return AccuracyReport(sessions, correct, lo, hi)
