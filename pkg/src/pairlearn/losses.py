"""Pair enumeration and the three training criteria: MCL, KCL and cross-entropy.

All losses take a batch of categorical outputs (an ``(n, K)`` Value or array of
probability rows) and return a scalar Value averaged over the defined pairs (or
samples, for cross-entropy). Averaging instead of summing keeps the loss scale
independent of the batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError

EPS = 1e-7
DEFAULT_MARGIN = 2.0


def enumerate_pairs(b: int) -> np.ndarray:
    """All unordered pairs ``(i, j)``, ``i < j < b``, in lexicographic order."""
    if b < 2:
        raise ContractError(f"need at least two samples to form a pair, got {b}")
    i, j = np.triu_indices(b, k=1)
    return np.stack([i, j], axis=1).astype(np.int64)


@dataclass
class PairwiseLabelSet:
    """Similarity targets over a list of pairs; masked-out pairs are undefined."""

    pairs: np.ndarray
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        self.mask = np.asarray(self.mask, dtype=bool).reshape(-1)
        m = len(self.pairs)
        if self.values.shape != (m,) or self.mask.shape != (m,):
            raise ContractError("pairs, values and mask must have the same length")
        if np.any((self.values < 0) | (self.values > 1)) or not np.all(np.isfinite(self.values)):
            raise ContractError("similarity targets must lie in [0, 1]")

    @classmethod
    def full(cls, pairs, values) -> PairwiseLabelSet:
        values = np.asarray(values, dtype=np.float64)
        return cls(pairs, values, np.ones(len(values), dtype=bool))

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def n_defined(self) -> int:
        return int(self.mask.sum())

    def defined(self) -> tuple[np.ndarray, np.ndarray]:
        return self.pairs[self.mask], self.values[self.mask]

    def is_binary(self) -> bool:
        v = self.values[self.mask]
        return bool(np.all((v == 0) | (v == 1)))

    def as_dict(self) -> dict[tuple[int, int], float]:
        """Defined pairs only, keyed by ``(i, j)``; handy in tests and reports."""
        return {(int(i), int(j)): float(v) for (i, j), v in zip(*self.defined())}


def predicted_similarity(p, q) -> float:
    """Probability that two samples fall on the same output node: ``p . q``."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ContractError(f"need two probability vectors of equal length, got {p.shape} and {q.shape}")
    return float(np.sort(p * q).sum())


def _defined_pairs(outputs: ad.Value, targets: PairwiseLabelSet) -> tuple[np.ndarray, np.ndarray]:
    pairs, values = targets.defined()
    if len(pairs) == 0:
        raise ContractError("no defined pairs: the loss would be empty")
    if outputs.data.ndim != 2:
        raise ContractError(f"outputs must be an (n, K) batch, got shape {outputs.shape}")
    if pairs.max() >= outputs.shape[0] or pairs.min() < 0:
        raise ContractError("pair indices fall outside the batch")
    return pairs, values


def pair_similarities(outputs, pairs) -> ad.Value:
    """Differentiable ``s_hat`` for each row of ``pairs``."""
    outputs = ad.lift(outputs)
    pairs = np.asarray(pairs, dtype=np.int64)
    return ad.rowdot(ad.take(outputs, pairs[:, 0]), ad.take(outputs, pairs[:, 1]))


def mcl_loss(outputs, targets: PairwiseLabelSet, eps: float = EPS) -> ad.Value:
    """Binary cross-entropy between pair targets and predicted pair similarity.

    Soft targets in [0, 1] are accepted. ``s_hat`` is clamped to
    ``[eps, 1 - eps]`` before the logs.
    """
    outputs = ad.lift(outputs)
    pairs, s = _defined_pairs(outputs, targets)
    s_hat = ad.clip(pair_similarities(outputs, pairs), eps, 1.0 - eps)
    per_pair = -(s * ad.log(s_hat) + (1.0 - s) * ad.log(1.0 - s_hat))
    return ad.mean(per_pair)


def _kl_rows(p: ad.Value, log_p: ad.Value, log_q: ad.Value) -> ad.Value:
    return ad.canonical_sum(p * (log_p - log_q), axis=-1)


def kcl_loss(outputs, targets: PairwiseLabelSet, sigma: float = DEFAULT_MARGIN, eps: float = EPS) -> ad.Value:
    """Symmetric-KL contrastive loss with hinge margin ``sigma`` on dissimilar pairs.

    Targets must be binary. Probabilities are clamped below at ``eps`` inside
    the logs only.
    """
    if not sigma > 0:
        raise ContractError("KCL margin sigma must be positive")
    outputs = ad.lift(outputs)
    pairs, s = _defined_pairs(outputs, targets)
    if not np.all((s == 0) | (s == 1)):
        raise ContractError("KCL needs binary similarity targets")
    log_out = ad.log(ad.clip(outputs, eps))
    i, j = pairs[:, 0], pairs[:, 1]
    p, q = ad.take(outputs, i), ad.take(outputs, j)
    log_p, log_q = ad.take(log_out, i), ad.take(log_out, j)
    kl_pq = _kl_rows(p, log_p, log_q)
    kl_qp = _kl_rows(q, log_q, log_p)
    similar = kl_pq + kl_qp
    dissimilar = ad.hinge(sigma - kl_pq) + ad.hinge(sigma - kl_qp)
    return ad.mean(s * similar + (1.0 - s) * dissimilar)


def cross_entropy_loss(outputs, labels, eps: float = EPS) -> ad.Value:
    """Mean of ``-log p[y]`` with the picked probability clamped below at ``eps``."""
    outputs = ad.lift(outputs)
    labels = np.asarray(labels)
    n, k = outputs.shape
    if labels.shape != (n,):
        raise ContractError(f"need one label per sample: {labels.shape} vs {n} outputs")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ContractError("labels must be integers")
    if np.any(labels < 0) or np.any(labels >= k):
        raise ContractError(f"labels must lie in 0..{k - 1}")
    picked = ad.take(outputs, (np.arange(n), labels))
    return -ad.mean(ad.log(ad.clip(picked, eps)))
