"""Shared data model and configuration.

All containers are frozen dataclasses wrapping numpy arrays. Arrays are
marked read-only on construction so instances can be shared freely.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

METHODS = ("tsne", "ctsne", "rctsne")
VARIANCE_MODES = ("on_p", "on_r")


class ValidationError(ValueError):
    """Raised when inputs violate a data-model invariant."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DataMatrix:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValidationError(f"data must be 2-D, got shape {v.shape}")
        if v.shape[0] < 2:
            raise ValidationError("data needs at least 2 points")
        if v.shape[1] < 1:
            raise ValidationError("data needs at least 1 dimension")
        if not np.all(np.isfinite(v)):
            raise ValidationError("data contains non-finite entries")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabelVector:
    """Per-point class ids in ``[0, L)``; every class must be populated."""

    labels: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 1:
            raise ValidationError("labels must be 1-D")
        if lab.size and not np.issubdtype(lab.dtype, np.integer):
            if not np.all(np.equal(np.mod(lab, 1), 0)):
                raise ValidationError("labels must be integer class ids")
        lab = lab.astype(np.int64)
        if lab.size and lab.min() < 0:
            raise ValidationError("label out of range: negative class id")
        n_classes = int(lab.max()) + 1 if lab.size else 0
        counts = np.bincount(lab, minlength=n_classes)
        if np.any(counts == 0):
            missing = np.flatnonzero(counts == 0).tolist()
            raise ValidationError(f"label out of range: classes {missing} are empty")
        object.__setattr__(self, "labels", _frozen(lab))
        if self.names and len(self.names) != n_classes:
            raise ValidationError("names must have one entry per class")
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_values(cls, values: Sequence) -> "LabelVector":
        """Map arbitrary label values to ids in first-appearance order."""
        ids: dict = {}
        out = np.empty(len(values), dtype=np.int64)
        for i, v in enumerate(values):
            out[i] = ids.setdefault(v, len(ids))
        return cls(out, names=tuple(str(k) for k in ids))

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.n else 0

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass(frozen=True)
class SparseAffinity:
    """Row-compressed nonnegative similarities without self-pairs.

    ``state`` is ``"conditional"`` (every row sums to one) or ``"symmetric"``
    (structurally symmetric, total mass one).
    """

    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    n: int
    state: str = "symmetric"

    def __post_init__(self):
        if self.state not in ("conditional", "symmetric"):
            raise ValidationError(f"unknown affinity state {self.state!r}")
        object.__setattr__(self, "indptr", _frozen(np.asarray(self.indptr, dtype=np.int64)))
        object.__setattr__(self, "indices", _frozen(np.asarray(self.indices, dtype=np.int64)))
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=np.float64)))
        if self.indptr.shape != (self.n + 1,):
            raise ValidationError("indptr must have n + 1 entries")
        if np.any(self.values < 0):
            raise ValidationError("affinities must be nonnegative")

    @classmethod
    def from_csr(cls, m, state: str = "symmetric") -> "SparseAffinity":
        m = m.tocsr()
        m.sort_indices()
        return cls(m.indptr, m.indices, m.data, m.shape[0], state)

    def to_csr(self):
        import scipy.sparse as sp

        return sp.csr_matrix(
            (np.array(self.values), np.array(self.indices), np.array(self.indptr)),
            shape=(self.n, self.n),
        )

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def rows(self) -> np.ndarray:
        """Row id of every stored entry."""
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def check(self, atol: float = 1e-9) -> None:
        """Assert the invariants of the declared state."""
        r = self.rows()
        if np.any(r == self.indices):
            raise ValidationError("affinity contains self-pairs")
        if self.state == "conditional":
            sums = np.add.reduceat(self.values, self.indptr[:-1]) if self.values.size else np.zeros(0)
            nonempty = np.diff(self.indptr) > 0
            if not np.allclose(sums[nonempty[: sums.size]], 1.0, rtol=0, atol=atol):
                raise ValidationError("conditional rows do not sum to one")
        else:
            if abs(self.values.sum() - 1.0) > atol:
                raise ValidationError("symmetric affinity does not sum to one")
            m = self.to_csr()
            if (m != m.T).nnz:
                raise ValidationError("affinity is not symmetric")


@dataclass(frozen=True)
class Embedding:
    coords: np.ndarray
    loss_trace: tuple = ()
    seed: Optional[int] = None

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim != 2 or not np.all(np.isfinite(c)):
            raise ValidationError("embedding coordinates must be a finite 2-D array")
        object.__setattr__(self, "coords", _frozen(c))
        object.__setattr__(self, "loss_trace", tuple(self.loss_trace))

    @property
    def out_dim(self) -> int:
        return self.coords.shape[1]


@dataclass(frozen=True)
class EmbedConfig:
    """Everything that determines an embedding run.

    ``beta`` is the ratio of the down-weighting factor to the reference
    factor (the latter fixed at one), so ``beta=1`` means no conditioning.
    """

    method: str = "tsne"
    perplexity: float = 30.0
    beta: float = 1.0
    theta: float = 0.5
    epochs: int = 750
    variance_mode: str = "on_p"
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: Optional[float] = None
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch_iter: int = 250
    seed: int = 0
    out_dim: int = 2
    log_every: int = 50

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        if self.variance_mode not in VARIANCE_MODES:
            raise ValidationError(f"unknown variance mode {self.variance_mode!r}")
        if not self.perplexity > 0:
            raise ValidationError("perplexity must be positive")
        if not 0 < self.beta <= 1:
            raise ValidationError("beta must lie in (0, 1]")
        if not self.theta >= 0:
            raise ValidationError("theta must be nonnegative")
        if self.epochs < 1:
            raise ValidationError("epochs must be a positive integer")
        if self.out_dim < 1:
            raise ValidationError("out_dim must be positive")
        if self.out_dim != 2 and self.theta > 0:
            raise ValidationError("Barnes-Hut needs out_dim=2; use theta=0 for other dimensions")

    def replace(self, **changes) -> "EmbedConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EmbedConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def resolved_learning_rate(self, n: int) -> float:
        if self.learning_rate is not None:
            return float(self.learning_rate)
        return max(n / 12.0, 50.0)

    @property
    def k_total(self) -> int:
        return int(np.ceil(3 * self.perplexity))

    @property
    def k_half(self) -> int:
        return int(np.ceil(1.5 * self.perplexity))


@dataclass(frozen=True)
class Inputs:
    data: DataMatrix
    labels: Optional[LabelVector]
    config: EmbedConfig = field(default_factory=EmbedConfig)


def validate_inputs(data, labels, cfg: EmbedConfig) -> Inputs:
    """Check a (data, labels, config) triple and return it bundled.

    ``data`` and ``labels`` may be raw arrays; they are wrapped in the
    corresponding containers. Raises :class:`ValidationError` on any
    violated invariant.
    """
    if not isinstance(data, DataMatrix):
        data = DataMatrix(data)
    if labels is not None and not isinstance(labels, LabelVector):
        labels = LabelVector(labels)
    if labels is not None and labels.n != data.n:
        raise ValidationError(f"dimension mismatch: {data.n} points but {labels.n} labels")
    if cfg.method != "tsne" and labels is None:
        raise ValidationError(f"labels required for method {cfg.method!r}")
    if 3 * cfg.perplexity >= data.n:
        raise ValidationError(
            f"perplexity too large: 3*{cfg.perplexity} >= n={data.n}"
        )
    return Inputs(data, labels, cfg)
