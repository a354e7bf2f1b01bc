"""Samplers for the LPN-based bimodal task and its unimodal projections.

A datapoint is ``(x, y, z)`` with

* ``x = (xvec, idx)``: ``xvec ~ Ber(theta)^n`` and ``idx`` uniform in ``[0, n)``;
* ``y = (A, yvec)``: ``A`` uniform ``n x n`` and ``yvec = xvec·A + b + e_idx``;
* ``z = (zvec, zbit)``: ``zvec = A·w + b'`` and ``zbit = yvec·w + b''``,

where ``b, b' ~ Ber(theta)^n``, ``b'' ~ Ber(theta)`` and the planted secret
``w ~ Ber(theta)^n`` is fixed for a whole dataset.

Large collections are kept columnar (``XBatch`` / ``YBatch`` / ``ZBatch``);
indexing a batch yields the single-point types.
"""

from __future__ import annotations

import abc
import enum
import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from . import gf2
from .gf2 import BitMatrix, BitVec, DimensionError
from .rng import Rng

DEFAULT_CHUNK = 1 << 16


@dataclass(frozen=True)
class TaskParams:
    """Task family knobs.  ``theta`` defaults to ``n**-0.5`` and ``k`` to ``n**3``."""

    n: int
    theta: float | None = None
    k: int | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.theta is None:
            object.__setattr__(self, "theta", self.n ** -0.5)
        if self.k is None:
            object.__setattr__(self, "k", self.n ** 3)
        # theta = 0 is allowed so noise-free identities can be exercised.
        if not (0.0 <= self.theta < 0.5):
            raise ValueError(f"theta must lie in [0, 0.5), got {self.theta}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    def with_theta(self, theta: float) -> "TaskParams":
        return replace(self, theta=theta)

    def echo(self) -> dict:
        return {"n": self.n, "theta": self.theta, "k": self.k}


def fast_k(n: int, c: float = 8.0) -> int:
    """Reduced training-set size ``c·n²·ln n`` for quick runs."""
    return max(1, int(math.ceil(c * n * n * math.log(n))))


# ---------------------------------------------------------------------------
# single-point types


@dataclass(frozen=True)
class ModalityX:
    xvec: BitVec
    idx: int


@dataclass(frozen=True)
class ModalityY:
    A: BitMatrix
    yvec: BitVec


@dataclass(frozen=True)
class LabelZ:
    zvec: BitVec
    zbit: int

    def bits(self) -> np.ndarray:
        return np.concatenate([self.zvec.bits(), [self.zbit]]).astype(np.uint8)


@dataclass(frozen=True)
class Secret:
    w: BitVec

    def __len__(self) -> int:
        return len(self.w)

    def digest(self) -> str:
        return hashlib.sha256(len(self.w).to_bytes(4, "little") + self.w.to_bytes()).hexdigest()


@dataclass(frozen=True)
class DataPoint:
    x: ModalityX
    y: ModalityY
    z: LabelZ


# ---------------------------------------------------------------------------
# columnar batches


class _Batch:
    n: int

    def __len__(self) -> int:  # pragma: no cover - overridden
        raise NotImplementedError

    def _take(self, sl):  # pragma: no cover - overridden
        raise NotImplementedError

    def _item(self, i: int):  # pragma: no cover - overridden
        raise NotImplementedError

    def __getitem__(self, key):
        if isinstance(key, slice):
            return self._take(key)
        if isinstance(key, np.ndarray):
            return self._take(key)
        i = int(key)
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(key)
        return self._item(i)

    def __iter__(self):
        for i in range(len(self)):
            yield self._item(i)


@dataclass(eq=False)
class XBatch(_Batch):
    n: int
    xvec: np.ndarray  # (N, W) uint64
    idx: np.ndarray  # (N,) int64

    def __len__(self) -> int:
        return self.xvec.shape[0]

    def _take(self, sl):
        return XBatch(self.n, self.xvec[sl], self.idx[sl])

    def _item(self, i):
        return ModalityX(BitVec(self.n, self.xvec[i]), int(self.idx[i]))

    @classmethod
    def from_items(cls, items: list[ModalityX]) -> "XBatch":
        n = len(items[0].xvec)
        return cls(n, np.stack([it.xvec.words for it in items]),
                   np.array([it.idx for it in items], dtype=np.int64))

    @classmethod
    def concat(cls, parts: list["XBatch"]) -> "XBatch":
        return cls(parts[0].n, np.concatenate([p.xvec for p in parts]),
                   np.concatenate([p.idx for p in parts]))


@dataclass(eq=False)
class YBatch(_Batch):
    n: int
    A: np.ndarray  # (N, n, W)
    yvec: np.ndarray  # (N, W)

    def __len__(self) -> int:
        return self.yvec.shape[0]

    def _take(self, sl):
        return YBatch(self.n, self.A[sl], self.yvec[sl])

    def _item(self, i):
        return ModalityY(BitMatrix(self.n, self.n, self.A[i]), BitVec(self.n, self.yvec[i]))

    @classmethod
    def from_items(cls, items: list[ModalityY]) -> "YBatch":
        n = len(items[0].yvec)
        return cls(n, np.stack([it.A.words for it in items]),
                   np.stack([it.yvec.words for it in items]))

    @classmethod
    def concat(cls, parts: list["YBatch"]) -> "YBatch":
        return cls(parts[0].n, np.concatenate([p.A for p in parts]),
                   np.concatenate([p.yvec for p in parts]))


@dataclass(eq=False)
class ZBatch(_Batch):
    """Vector labels ``(zvec, zbit)`` with ``n + 1`` bits each."""

    n: int
    zvec: np.ndarray  # (N, W)
    zbit: np.ndarray  # (N,) uint8

    def __len__(self) -> int:
        return self.zvec.shape[0]

    def _take(self, sl):
        return ZBatch(self.n, self.zvec[sl], self.zbit[sl])

    def _item(self, i):
        return LabelZ(BitVec(self.n, self.zvec[i]), int(self.zbit[i]))

    @classmethod
    def from_items(cls, items: list[LabelZ]) -> "ZBatch":
        n = len(items[0].zvec)
        return cls(n, np.stack([it.zvec.words for it in items]),
                   np.array([it.zbit for it in items], dtype=np.uint8))

    @classmethod
    def concat(cls, parts: list["ZBatch"]) -> "ZBatch":
        return cls(parts[0].n, np.concatenate([p.zvec for p in parts]),
                   np.concatenate([p.zbit for p in parts]))

    @property
    def width(self) -> int:
        return self.n + 1

    def mismatches(self, other: "ZBatch") -> np.ndarray:
        """Per-item count of differing label bits."""
        diff = np.bitwise_count(self.zvec ^ other.zvec).sum(axis=-1, dtype=np.int64)
        return diff + (self.zbit != other.zbit)


@dataclass(eq=False)
class VecBatch(_Batch):
    """Plain vectors; the modality type of the toy parity task."""

    n: int
    words: np.ndarray  # (N, W)

    def __len__(self) -> int:
        return self.words.shape[0]

    def _take(self, sl):
        return VecBatch(self.n, self.words[sl])

    def _item(self, i):
        return BitVec(self.n, self.words[i])

    @classmethod
    def concat(cls, parts: list["VecBatch"]) -> "VecBatch":
        return cls(parts[0].n, np.concatenate([p.words for p in parts]))


@dataclass(eq=False)
class BitBatch(_Batch):
    """Binary labels."""

    bits: np.ndarray  # (N,) uint8
    n: int = 1

    def __len__(self) -> int:
        return self.bits.shape[0]

    def _take(self, sl):
        return BitBatch(self.bits[sl])

    def _item(self, i):
        return int(self.bits[i])

    @classmethod
    def concat(cls, parts: list["BitBatch"]) -> "BitBatch":
        return cls(np.concatenate([p.bits for p in parts]))

    @property
    def width(self) -> int:
        return 1

    def mismatches(self, other: "BitBatch") -> np.ndarray:
        return (self.bits != other.bits).astype(np.int64)


def label_disagreement(pred, labels) -> np.ndarray:
    """Normalized per-item Hamming disagreement between two label batches."""
    if len(pred) != len(labels):
        raise DimensionError("label batch lengths differ")
    return pred.mismatches(labels) / labels.width


@dataclass(eq=False)
class Dataset:
    """Bimodal samples ``(x, y, z)`` stored columnar; indexes to :class:`DataPoint`."""

    n: int
    x: XBatch
    y: YBatch
    z: ZBatch

    def __len__(self) -> int:
        return len(self.x)

    def __getitem__(self, key):
        if isinstance(key, (slice, np.ndarray)):
            return Dataset(self.n, self.x[key], self.y[key], self.z[key])
        return DataPoint(self.x[key], self.y[key], self.z[key])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_points(cls, points: list[DataPoint]) -> "Dataset":
        if not points:
            raise ValueError("no points")
        return cls(len(points[0].x.xvec), XBatch.from_items([p.x for p in points]),
                   YBatch.from_items([p.y for p in points]),
                   ZBatch.from_items([p.z for p in points]))

    @classmethod
    def concat(cls, parts: list["Dataset"]) -> "Dataset":
        return cls(parts[0].n, XBatch.concat([p.x for p in parts]),
                   YBatch.concat([p.y for p in parts]), ZBatch.concat([p.z for p in parts]))


@dataclass(eq=False)
class NoiseTrace:
    """Noise terms behind a dataset.  Test-only: exposes what labels hide."""

    b: np.ndarray
    b1: np.ndarray
    b2: np.ndarray


# ---------------------------------------------------------------------------
# batch samplers


def sample_chi_batch(params: TaskParams, count: int, rng: Rng) -> XBatch:
    n = params.n
    idx = rng.randbelow(n, size=count).astype(np.int64)
    xvec = gf2.bernoulli_words(rng, count, n, params.theta)
    return XBatch(n, xvec, idx)


def _onehot_words(idx: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((idx.shape[0], gf2.nwords(n)), dtype=np.uint64)
    out[np.arange(idx.shape[0]), idx // gf2.WORD] = np.left_shift(
        np.uint64(1), (idx % gf2.WORD).astype(np.uint64))
    return out


def apply_phi_batch(params: TaskParams, xb: XBatch, rng: Rng,
                    trace: dict | None = None) -> YBatch:
    n = params.n
    count = len(xb)
    a = gf2.uniform_words(rng, (count, n), n)
    b = gf2.bernoulli_words(rng, count, n, params.theta)
    yvec = gf2.batch_row_times_matrix(xb.xvec, a) ^ b ^ _onehot_words(xb.idx, n)
    if trace is not None:
        trace["b"] = b
    return YBatch(n, a, yvec)


def apply_psi_batch(params: TaskParams, secret: Secret, yb: YBatch, rng: Rng,
                    trace: dict | None = None) -> ZBatch:
    n = params.n
    if len(secret) != n or yb.n != n:
        raise DimensionError("secret / modality dimension mismatch")
    count = len(yb)
    b1 = gf2.bernoulli_words(rng, count, n, params.theta)
    b2 = gf2.bernoulli_bits(rng, count, params.theta)
    zvec = gf2.batch_matrix_times_col(yb.A, secret.w.words) ^ b1
    zbit = gf2.batch_inner(yb.yvec, secret.w.words) ^ b2
    if trace is not None:
        trace["b1"] = b1
        trace["b2"] = b2
    return ZBatch(n, zvec, zbit)


# ---------------------------------------------------------------------------
# single-point samplers


def sample_chi(params: TaskParams, rng: Rng) -> ModalityX:
    return sample_chi_batch(params, 1, rng)[0]


def apply_phi(params: TaskParams, x: ModalityX, rng: Rng) -> ModalityY:
    if len(x.xvec) != params.n or not 0 <= x.idx < params.n:
        raise DimensionError("x inconsistent with params")
    return apply_phi_batch(params, XBatch.from_items([x]), rng)[0]


def sample_zeta(params: TaskParams, rng: Rng) -> Secret:
    return Secret(gf2.bernoulli_vec(params.n, params.theta, rng))


def apply_psi(params: TaskParams, secret: Secret, y: ModalityY, rng: Rng) -> LabelZ:
    if y.A.rows != params.n or y.A.cols != params.n or len(y.yvec) != params.n:
        raise DimensionError("y inconsistent with params")
    return apply_psi_batch(params, secret, YBatch.from_items([y]), rng)[0]


def sample_dataset(params: TaskParams, secret: Secret, count: int, rng: Rng, *,
                   chunk: int = DEFAULT_CHUNK, return_noise: bool = False):
    """``count`` i.i.d. points under a fixed secret.

    Work is split into chunks of ``chunk`` points, chunk ``c`` drawing from
    ``rng.child("chunk", c)``, so the output does not depend on how chunks
    are scheduled.  With ``return_noise`` the noise terms come back as a
    :class:`NoiseTrace` alongside the dataset.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    parts, traces = [], []
    for c, start in enumerate(range(0, count, chunk)):
        size = min(chunk, count - start)
        r = rng.child("chunk", c)
        tr: dict = {}
        xb = sample_chi_batch(params, size, r)
        yb = apply_phi_batch(params, xb, r, tr)
        zb = apply_psi_batch(params, secret, yb, r, tr)
        parts.append(Dataset(params.n, xb, yb, zb))
        traces.append(tr)
    data = parts[0] if len(parts) == 1 else Dataset.concat(parts)
    if not return_noise:
        return data
    noise = NoiseTrace(np.concatenate([t["b"] for t in traces]),
                       np.concatenate([t["b1"] for t in traces]),
                       np.concatenate([t["b2"] for t in traces]))
    return data, noise


@dataclass(eq=False)
class Pairs:
    """Order-preserving unimodal projection; iterates as ``(input, label)`` tuples."""

    inputs: Any
    labels: Any

    def __len__(self) -> int:
        return len(self.inputs)

    def __getitem__(self, key):
        if isinstance(key, (slice, np.ndarray)):
            return Pairs(self.inputs[key], self.labels[key])
        return self.inputs[key], self.labels[key]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def project_yz(dataset: Dataset) -> Pairs:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    return Pairs(dataset.y, dataset.z)


def project_xz(dataset: Dataset) -> Pairs:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    return Pairs(dataset.x, dataset.z)


def uniform_zbatch(n: int, count: int, rng: Rng) -> ZBatch:
    zvec = gf2.uniform_words(rng, count, n)
    zbit = (rng.raw(count) >> np.uint64(63)).astype(np.uint8)
    return ZBatch(n, zvec, zbit)


# ---------------------------------------------------------------------------
# generic task interface


class LabelSpace(str, enum.Enum):
    BINARY = "binary"
    VECTOR = "vector"


class BimodalTask(abc.ABC):
    """An average-case bimodal task ``mu = (chi, eta, zeta)``.

    Alice draws a mapping ``phi ~ eta`` and unlabeled ``(x, phi[x])`` pairs;
    Bob draws a concept ``psi ~ zeta`` and labels the ``y`` side only.
    """

    n: int
    label_space: LabelSpace

    def sample_mapping(self, rng: Rng) -> Any:
        """Draw ``phi ~ eta``.  Point-mass tasks return ``None``."""
        return None

    @abc.abstractmethod
    def sample_concept(self, rng: Rng) -> Any: ...

    @abc.abstractmethod
    def sample_unlabeled(self, mapping: Any, count: int, rng: Rng) -> tuple[Any, Any]: ...

    @abc.abstractmethod
    def label(self, concept: Any, ys: Any, rng: Rng) -> Any: ...

    @abc.abstractmethod
    def random_labels(self, count: int, rng: Rng) -> Any: ...

    @abc.abstractmethod
    def default_learner(self) -> Callable: ...

    def describe(self) -> dict:
        return {"task": type(self).__name__, "n": self.n, "label_space": self.label_space.value}


class SeparationTask(BimodalTask):
    """The LPN construction with ``(n+1)``-bit vector labels."""

    label_space = LabelSpace.VECTOR

    def __init__(self, params: TaskParams):
        self.params = params
        self.n = params.n

    def sample_concept(self, rng: Rng) -> Secret:
        return sample_zeta(self.params, rng)

    def sample_unlabeled(self, mapping, count: int, rng: Rng) -> tuple[XBatch, YBatch]:
        xb = sample_chi_batch(self.params, count, rng)
        return xb, apply_phi_batch(self.params, xb, rng)

    def label(self, concept: Secret, ys: YBatch, rng: Rng) -> ZBatch:
        return apply_psi_batch(self.params, concept, ys, rng)

    def random_labels(self, count: int, rng: Rng) -> ZBatch:
        return uniform_zbatch(self.n, count, rng)

    def default_learner(self):
        from .learner import amu_learner
        return amu_learner

    def describe(self) -> dict:
        return super().describe() | self.params.echo()


class BitLabelTask(BimodalTask):
    """Extension: the separation task restricted to its ``zbit`` label coordinate.

    Lets the binary-label machinery (hybrids, the next-bit predictor, the
    exact decision rule) run on the LPN construction.
    """

    label_space = LabelSpace.BINARY

    def __init__(self, params: TaskParams):
        self.base = SeparationTask(params)
        self.params = params
        self.n = params.n

    def sample_concept(self, rng: Rng) -> Secret:
        return self.base.sample_concept(rng)

    def sample_unlabeled(self, mapping, count, rng):
        return self.base.sample_unlabeled(mapping, count, rng)

    def label(self, concept, ys, rng) -> BitBatch:
        return BitBatch(self.base.label(concept, ys, rng).zbit)

    def random_labels(self, count, rng) -> BitBatch:
        return BitBatch((rng.raw(count) >> np.uint64(63)).astype(np.uint8))

    def default_learner(self):
        from .learner import amu_bit_learner
        return amu_bit_learner

    def describe(self) -> dict:
        return super().describe() | self.params.echo()


class ParityToyTask(BimodalTask):
    """Noise-free binary toy: ``y`` uniform, ``x = y``, label ``y·w`` for uniform ``w``."""

    label_space = LabelSpace.BINARY

    def __init__(self, n: int):
        self.n = n

    def sample_concept(self, rng: Rng) -> BitVec:
        return gf2.uniform_vec(self.n, rng)

    def sample_unlabeled(self, mapping, count, rng):
        ys = VecBatch(self.n, gf2.uniform_words(rng, count, self.n))
        return ys, ys

    def label(self, concept: BitVec, ys: VecBatch, rng) -> BitBatch:
        return BitBatch(gf2.batch_inner(ys.words, concept.words))

    def random_labels(self, count, rng) -> BitBatch:
        return BitBatch((rng.raw(count) >> np.uint64(63)).astype(np.uint8))

    def default_learner(self):
        from .learner import parity_solver_learner
        return parity_solver_learner


# ---------------------------------------------------------------------------
# decisional LPN


class World(str, enum.Enum):
    PLANTED = "planted"
    UNIFORM = "uniform"


class SecretMode(str, enum.Enum):
    UNIFORM = "uniform_secret"
    BERNOULLI = "bernoulli_secret"


@dataclass(frozen=True)
class DlpnPublic:
    """What a distinguisher is allowed to see: ``(A, q)``."""

    A: BitMatrix
    q: BitVec


@dataclass(frozen=True)
class DlpnInstance:
    A: BitMatrix
    q: BitVec
    world: World
    secret_mode: SecretMode
    theta: float
    secret: BitVec | None = field(default=None, repr=False)

    def public(self) -> DlpnPublic:
        return DlpnPublic(self.A, self.q)


def sample_dlpn(n: int, m: int, theta: float, secret_mode: SecretMode | str,
                world: World | str, rng: Rng) -> DlpnInstance:
    """``A`` uniform ``n x m``; planted: ``q = xA + b``, uniform: ``q`` uniform."""
    if m < 1:
        raise ValueError("m must be >= 1")
    secret_mode, world = SecretMode(secret_mode), World(world)
    a = gf2.uniform_matrix(n, m, rng)
    if secret_mode is SecretMode.BERNOULLI:
        x = gf2.bernoulli_vec(n, theta, rng)
    else:
        x = gf2.uniform_vec(n, rng)
    if world is World.PLANTED:
        q = gf2.row_times_matrix(x, a) ^ gf2.bernoulli_vec(m, theta, rng)
    else:
        q = gf2.uniform_vec(m, rng)
    return DlpnInstance(a, q, world, secret_mode, theta, x)
