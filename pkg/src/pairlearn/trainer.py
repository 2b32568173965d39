"""Optimizers, learning-rate schedule and the three training loops.

* :func:`train_supervised_pairwise` derives pair targets from class labels
  (or uses the labels directly for the CE objective),
* :func:`train_unsupervised_transfer` takes pair targets from an external
  similarity source and never sees class labels,
* :func:`train_semi_supervised` combines weighted CE on the labeled part with
  MCL on pseudo-similarities over every pair of the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from . import autodiff as ad
from .data import LabeledDataset, MetricsReport, UnlabeledDataset
from .errors import ConfigError
from .evaluation import ContingencyTable, classification_accuracy, clustering_accuracy, nmi
from .losses import (
    DEFAULT_MARGIN,
    PairwiseLabelSet,
    cross_entropy_loss,
    enumerate_pairs,
    kcl_loss,
    mcl_loss,
    pair_similarities,
)
from .model import Mlp, ParameterVector
from .similarity import augmentation_pairs, combine_or, pseudo_similarity, similarity_from_labels

OBJECTIVES = ("CE", "MCL", "KCL")
OPTIMIZERS = ("adam", "sgd")

EvalFn = Callable[[Mlp], "tuple[float, float]"]
SimilaritySource = Callable[[np.ndarray], PairwiseLabelSet]


@dataclass(frozen=True)
class TrainConfig:
    objective: str = "MCL"
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 60
    decay_epochs: tuple[int, ...] = (40,)
    decay_factor: float = 0.1
    seed: int = 0
    sigma: float = DEFAULT_MARGIN
    # semi-supervised only
    augment_scale: float | None = None
    warm_start: bool = True
    warm_start_epochs: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "objective", str(self.objective).upper())
        object.__setattr__(self, "optimizer", str(self.optimizer).lower())
        object.__setattr__(self, "decay_epochs", tuple(int(e) for e in self.decay_epochs))
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.lr < 0 or self.epochs < 0:
            raise ConfigError("lr and epochs must be nonnegative")
        if self.batch_size < 1 or (self.objective != "CE" and self.batch_size < 2):
            raise ConfigError("pairwise objectives need batch_size >= 2")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.adam_eps > 0):
            raise ConfigError("Adam needs 0 <= beta1, beta2 < 1 and eps > 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")
        if self.sigma <= 0:
            raise ConfigError("KCL margin sigma must be positive")
        if self.warm_start_epochs is not None and self.warm_start_epochs < 0:
            raise ConfigError("warm_start_epochs must be nonnegative")
        if self.augment_scale is not None and self.augment_scale < 0:
            raise ConfigError("augment_scale must be >= 0")

    @property
    def pairwise(self) -> bool:
        return self.objective != "CE"


def learning_rate(config: TrainConfig, epoch: int) -> float:
    """Step schedule: multiply by ``decay_factor`` at every decay epoch reached (0-based)."""
    drops = sum(1 for e in config.decay_epochs if epoch >= e)
    return config.lr * config.decay_factor**drops


@dataclass
class OptimizerState:
    step: int = 0
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(
    params: ParameterVector,
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
    config: TrainConfig,
    lr: float | None = None,
) -> tuple[ParameterVector, OptimizerState]:
    """One update. Adam uses bias-corrected moments; SGD uses classical momentum."""
    lr = config.lr if lr is None else lr
    t = state.step + 1
    new, first, second = {}, {}, {}
    for name, theta in params.items():
        g = grads[name]
        if config.optimizer == "adam":
            m = config.beta1 * state.first.get(name, 0.0) + (1 - config.beta1) * g
            v = config.beta2 * state.second.get(name, 0.0) + (1 - config.beta2) * g * g
            m_hat = m / (1 - config.beta1**t)
            v_hat = v / (1 - config.beta2**t)
            new[name] = theta - lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)
            first[name], second[name] = m, v
        else:
            velocity = config.momentum * state.first.get(name, 0.0) + g
            new[name] = theta - lr * velocity
            first[name] = velocity
    return ParameterVector(new), OptimizerState(t, first, second)


@dataclass
class TrainResult:
    model: Mlp
    history: MetricsReport
    # semi-supervised: the supervised-only model used as the starting point
    baseline: Mlp | None = None


def _batches(rng: np.random.Generator, n: int, batch_size: int, min_size: int) -> list[np.ndarray]:
    order = rng.permutation(n)
    out = [order[k : k + batch_size] for k in range(0, n, batch_size)]
    return [b for b in out if len(b) >= min_size]


def _fit(
    model: Mlp,
    n_samples: int,
    batch_loss: Callable[[Mlp, dict, np.ndarray], ad.Value],
    config: TrainConfig,
    eval_fn: EvalFn | None,
    batches: Callable[[np.random.Generator], list[np.ndarray]] | None = None,
) -> TrainResult:
    rng = np.random.default_rng(config.seed)
    current = model.copy()
    state = OptimizerState()
    history = MetricsReport()
    min_size = 2 if config.pairwise else 1
    for epoch in range(config.epochs):
        lr = learning_rate(config, epoch)
        epoch_batches = batches(rng) if batches else _batches(rng, n_samples, config.batch_size, min_size)
        losses = []
        for idx in epoch_batches:
            values = current.param_values(requires_grad=True)
            loss = batch_loss(current, values, idx)
            ad.backward(loss)
            grads = {name: v.grad for name, v in values.items()}
            params, state = optimizer_step(current.params, grads, state, config, lr)
            current = current.with_params(params)
            losses.append(loss.item())
        acc, mi = eval_fn(current) if eval_fn else (math.nan, math.nan)
        history.append(epoch + 1, float(np.mean(losses)) if losses else math.nan, acc, mi)
    return TrainResult(current, history)


def _pair_loss(config: TrainConfig, outputs: ad.Value, targets: PairwiseLabelSet) -> ad.Value:
    if config.objective == "MCL":
        return mcl_loss(outputs, targets)
    return kcl_loss(outputs, targets, sigma=config.sigma)


def train_supervised_pairwise(
    model: Mlp,
    dataset: LabeledDataset,
    config: TrainConfig,
    eval_fn: EvalFn | None = None,
) -> TrainResult:
    """Train from class labels: converted to pair targets for MCL/KCL, used directly for CE."""
    if config.objective == "CE" and model.spec.n_outputs < dataset.n_classes:
        raise ConfigError("CE needs at least as many output nodes as classes")
    X, y = dataset.features, dataset.labels

    def batch_loss(m: Mlp, values, idx):
        outputs = m.forward(X[idx], values)
        if config.objective == "CE":
            return cross_entropy_loss(outputs, y[idx])
        targets = similarity_from_labels(y[idx], enumerate_pairs(len(idx)))
        return _pair_loss(config, outputs, targets)

    return _fit(model, len(dataset), batch_loss, config, eval_fn)


def train_unsupervised_transfer(
    model: Mlp,
    dataset: UnlabeledDataset,
    source: SimilaritySource,
    config: TrainConfig,
    eval_fn: EvalFn | None = None,
) -> TrainResult:
    """Train on features alone; ``source(batch_index)`` supplies targets over all batch pairs."""
    if not config.pairwise:
        raise ConfigError("transfer learning has no class labels: use MCL or KCL")
    X = dataset.features

    def batch_loss(m: Mlp, values, idx):
        return _pair_loss(config, m.forward(X[idx], values), source(idx))

    return _fit(model, len(dataset), batch_loss, config, eval_fn)


@dataclass(frozen=True)
class SslWeights:
    alpha: float
    beta: float


def ssl_weights(n_labeled: int, n_total_reg: int) -> SslWeights:
    """Weights from data counts: ``alpha = |D_L| / (|D| + |D_L|)``, ``beta = |D| / (|D| + |D_L|)``.

    The smaller weight is the exact quotient and the larger is one minus it,
    which keeps ``alpha + beta == 1`` exact in floating point.
    """
    if n_labeled <= 0 or n_total_reg <= 0:
        raise ConfigError("ssl_weights needs positive counts")
    denom = n_total_reg + n_labeled
    if n_labeled <= n_total_reg:
        alpha = n_labeled / denom
        return SslWeights(alpha, 1.0 - alpha)
    beta = n_total_reg / denom
    return SslWeights(1.0 - beta, beta)


def _spread(items: np.ndarray, n_chunks: int) -> list[np.ndarray]:
    bounds = np.round(np.linspace(0, len(items), n_chunks + 1)).astype(np.int64)
    return [items[bounds[k] : bounds[k + 1]] for k in range(n_chunks)]


def train_semi_supervised(
    model: Mlp,
    labeled: LabeledDataset,
    unlabeled: UnlabeledDataset,
    config: TrainConfig,
    eval_fn: EvalFn | None = None,
    pretrained: Mlp | None = None,
) -> TrainResult:
    """Weighted CE on labeled samples plus MCL on pseudo pair targets over the whole batch.

    Pair targets: ground truth when both members are labeled; otherwise the
    logical OR of the binarised current prediction and, when
    ``config.augment_scale`` is set, the (original, jittered copy) pairs.
    With ``config.warm_start`` training starts from a CE model fitted on the
    labeled part alone (or from ``pretrained`` when given).
    """
    if len(labeled) == 0:
        raise ConfigError("semi-supervised training needs labeled samples")
    if model.spec.n_outputs < labeled.n_classes:
        raise ConfigError("the network needs at least as many output nodes as classes")
    n_l, n_u = len(labeled), len(unlabeled)
    weights = ssl_weights(n_l, n_l + n_u)

    baseline = pretrained
    if baseline is None and config.warm_start:
        sup_epochs = config.epochs if config.warm_start_epochs is None else config.warm_start_epochs
        sup_config = replace(config, objective="CE", epochs=sup_epochs)
        baseline = train_supervised_pairwise(model, labeled, sup_config).model
    start = baseline if baseline is not None else model

    X = np.concatenate([labeled.features, unlabeled.features])
    y = np.concatenate([labeled.labels, np.full(n_u, -1, dtype=np.int64)])
    n_batches = max(1, math.ceil((n_l + n_u) / config.batch_size))
    aug_rng = np.random.default_rng([config.seed, 1])

    def batches(rng):
        lab = _spread(rng.permutation(n_l), n_batches)
        unl = _spread(n_l + rng.permutation(n_u), n_batches)
        out = [np.concatenate([a, b]) for a, b in zip(lab, unl)]
        return [b for b in out if len(b) >= 2]

    def batch_loss(m: Mlp, values, idx):
        xb, yb = X[idx], y[idx]
        aug = None
        if config.augment_scale is not None:
            xb, aug = augmentation_pairs(xb, config.augment_scale, seed=int(aug_rng.integers(2**63)))
            yb = np.concatenate([yb, yb])
        outputs = m.forward(xb, values)
        pairs = enumerate_pairs(len(xb))
        # pseudo targets are constants: no gradient through the binarised predictions
        targets = pseudo_similarity(pair_similarities(outputs.data, pairs).data, pairs)
        if aug is not None:
            targets = combine_or(targets, aug)
        yi, yj = yb[pairs[:, 0]], yb[pairs[:, 1]]
        both = (yi >= 0) & (yj >= 0)
        values_ = np.where(both, (yi == yj).astype(np.float64), targets.values)
        loss = weights.beta * mcl_loss(outputs, PairwiseLabelSet.full(pairs, values_))
        rows = np.flatnonzero(yb >= 0)
        if len(rows):
            loss = loss + weights.alpha * cross_entropy_loss(ad.take(outputs, rows), yb[rows])
        return loss

    semi_config = replace(config, objective="MCL")
    result = _fit(start, n_l + n_u, batch_loss, semi_config, eval_fn, batches=batches)
    result.baseline = baseline
    return result


def make_evaluator(features, labels, n_classes: int | None = None, mapped: bool = True) -> EvalFn:
    """``(accuracy, nmi)`` of a model on held labels.

    ``mapped=True`` uses the optimal node-to-class assignment (unmatched nodes
    count as errors); ``mapped=False`` uses the identity mapping.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max()) + 1 if n_classes is None else n_classes

    def evaluate(model: Mlp) -> tuple[float, float]:
        nodes = model.assign(features)
        table = ContingencyTable.from_assignments(nodes, labels, model.spec.n_outputs, n_classes)
        acc = clustering_accuracy(table) if mapped else classification_accuracy(nodes, labels)
        return acc, nmi(table)

    return evaluate
