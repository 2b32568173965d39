"""Sources of pairwise similarity targets for the three learning regimes.

* ground truth from class labels (supervised),
* a rate-controlled noisy oracle standing in for a transferred similarity
  predictor (unsupervised transfer),
* binarised model predictions, augmentation pairs and their logical OR
  (semi-supervised).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import perturb
from .errors import ConfigError, ContractError
from .losses import PairwiseLabelSet, enumerate_pairs

PSEUDO_THRESHOLD = 0.5


def similarity_from_labels(labels, pairs) -> PairwiseLabelSet:
    labels = np.asarray(labels)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    same = labels[pairs[:, 0]] == labels[pairs[:, 1]]
    return PairwiseLabelSet.full(pairs, same.astype(np.float64))


@dataclass(frozen=True)
class NoiseSpec:
    """Confusion rates of the simulated similarity predictor.

    Only the two recalls drive sampling. Precisions depend on the share of
    similar pairs and cannot be set independently; when both are given they are
    checked for mutual consistency with the recalls, i.e. that one base rate
    reproduces both of them within ``tolerance``.
    """

    similar_recall: float
    dissimilar_recall: float
    similar_precision: float | None = None
    dissimilar_precision: float | None = None
    seed: int = 0
    tolerance: float = 0.005

    def __post_init__(self):
        for name in ("similar_recall", "dissimilar_recall"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        for name in ("similar_precision", "dissimilar_precision"):
            v = getattr(self, name)
            if v is not None and not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {v}")
        if self.similar_precision is not None and self.dissimilar_precision is not None:
            rate = self.implied_base_rate()
            if rate is None:
                raise ConfigError("precisions and recalls imply no valid share of similar pairs")
            _, implied_dp = self.implied_precisions(rate)
            if abs(implied_dp - self.dissimilar_precision) > self.tolerance:
                raise ConfigError(
                    f"inconsistent rates: at the base rate {rate:.4f} implied by the similar-pair "
                    f"precision, dissimilar-pair precision would be {implied_dp:.4f}, "
                    f"not {self.dissimilar_precision}"
                )

    def implied_precisions(self, base_rate: float) -> tuple[float, float]:
        """Expected (similar, dissimilar) precision when a share ``base_rate`` of pairs is similar."""
        r_s, r_d, pi = self.similar_recall, self.dissimilar_recall, base_rate
        tp, fn = pi * r_s, pi * (1 - r_s)
        tn, fp = (1 - pi) * r_d, (1 - pi) * (1 - r_d)
        sp = tp / (tp + fp) if tp + fp > 0 else float("nan")
        dp = tn / (tn + fn) if tn + fn > 0 else float("nan")
        return sp, dp

    def implied_base_rate(self) -> float | None:
        """Share of similar pairs at which the similar-pair precision is attained."""
        if self.similar_precision is None:
            return None
        p, r_s, fpr = self.similar_precision, self.similar_recall, 1 - self.dissimilar_recall
        denom = r_s * (1 - p) + p * fpr
        if denom <= 0:
            return None
        rate = p * fpr / denom
        return rate if 0 < rate < 1 else None


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def keyed_uniform(seed: int, keys) -> np.ndarray:
    """Uniform [0, 1) draws that depend only on ``(seed, key)``."""
    keys = np.asarray(keys, dtype=np.uint64)
    base = _splitmix64(np.array([seed], dtype=np.uint64))[0]
    z = _splitmix64(keys ^ base)
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def noisy_oracle(true_s: PairwiseLabelSet, spec: NoiseSpec, keys=None) -> PairwiseLabelSet:
    """Corrupt binary targets at the given recalls.

    A similar pair stays similar with probability ``similar_recall``; a
    dissimilar pair stays dissimilar with probability ``dissimilar_recall``.
    Each pair's draw is keyed by ``keys`` (default: its position), so a pair
    keeps the same verdict however often it is queried.
    """
    if not true_s.is_binary():
        raise ContractError("the noisy oracle corrupts binary targets only")
    keys = np.arange(len(true_s)) if keys is None else np.asarray(keys)
    if keys.shape != (len(true_s),):
        raise ContractError("need one key per pair")
    u = keyed_uniform(spec.seed, keys)
    similar = true_s.values == 1
    reported = np.where(similar, u < spec.similar_recall, u >= spec.dissimilar_recall)
    return PairwiseLabelSet(true_s.pairs, reported.astype(np.float64), true_s.mask.copy())


class OracleSource:
    """Simulated similarity predictor over a fixed pool of samples.

    Holds the pool's true labels privately and answers, for a minibatch of pool
    indices, with noisy targets over all pairs of the batch. The verdict for a
    pair is keyed on its pool indices, so it does not change between epochs.
    """

    def __init__(self, hidden_labels, spec: NoiseSpec):
        self._labels = np.asarray(hidden_labels, dtype=np.int64)
        self.spec = spec

    def __call__(self, batch_index) -> PairwiseLabelSet:
        batch_index = np.asarray(batch_index, dtype=np.int64)
        pairs = enumerate_pairs(len(batch_index))
        truth = similarity_from_labels(self._labels[batch_index], pairs)
        gi, gj = batch_index[pairs[:, 0]], batch_index[pairs[:, 1]]
        keys = np.minimum(gi, gj) * len(self._labels) + np.maximum(gi, gj)
        return noisy_oracle(truth, self.spec, keys)


def pseudo_similarity(s_hat, pairs, threshold: float = PSEUDO_THRESHOLD) -> PairwiseLabelSet:
    """Binarise predicted similarity: 1 where ``s_hat > threshold``; ties go to 0.

    The result is plain data, so no gradient flows back into the predictions.
    """
    s_hat = np.asarray(getattr(s_hat, "data", s_hat), dtype=np.float64).reshape(-1)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(s_hat) != len(pairs):
        raise ContractError("need one prediction per pair")
    return PairwiseLabelSet.full(pairs, (s_hat > threshold).astype(np.float64))


def augmentation_pairs(batch, scale: float, seed: int = 0) -> tuple[np.ndarray, PairwiseLabelSet]:
    """Append a jittered copy of every sample; only (original, copy) pairs are defined, all similar."""
    batch = np.asarray(batch, dtype=np.float64)
    n = len(batch)
    augmented = np.concatenate([batch, perturb(batch, scale, seed)])
    pairs = enumerate_pairs(2 * n)
    defined = pairs[:, 1] - pairs[:, 0] == n
    defined &= pairs[:, 0] < n
    return augmented, PairwiseLabelSet(pairs, defined.astype(np.float64), defined)


def combine_or(a: PairwiseLabelSet, b: PairwiseLabelSet) -> PairwiseLabelSet:
    """Defined where either side is; similar where either defined side says similar."""
    if a.pairs.shape != b.pairs.shape or not np.array_equal(a.pairs, b.pairs):
        raise ContractError("combine_or needs both label sets over the same pair list")
    if not (a.is_binary() and b.is_binary()):
        raise ContractError("combine_or needs binary targets")
    similar = (a.mask & (a.values == 1)) | (b.mask & (b.values == 1))
    return PairwiseLabelSet(a.pairs, similar.astype(np.float64), a.mask | b.mask)
