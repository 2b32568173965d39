"""Scaled end-to-end experiments on Gaussian blobs.

Each ``run_*`` function trains from scratch for one seed and returns plain
numbers, so the acceptance tests and the scripts in ``scripts/`` share one code
path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import generate_blobs, labeled_split, train_test_split
from .evaluation import evaluate_nodes
from .landscape import GridSpec, SurfaceResult, dataset_loss, evaluate_surface, mutual_directions
from .model import Mlp, MlpSpec, build
from .similarity import NoiseSpec, OracleSource
from .trainer import TrainConfig, make_evaluator, train_semi_supervised, train_supervised_pairwise, train_unsupervised_transfer


@dataclass(frozen=True)
class BlobTask:
    n_classes: int = 4
    n_per_class: int = 500
    dim: int = 2
    separation: float = 5.0
    spread: float = 0.5
    test_fraction: float = 0.2

    def split(self, seed: int):
        ds = generate_blobs(self.n_classes, self.n_per_class, self.dim, self.separation, self.spread, seed=seed)
        return train_test_split(ds, self.test_fraction, seed=seed)


@dataclass(frozen=True)
class ParityResult:
    acc_mcl: float
    acc_ce: float


def run_parity(seed: int, task: BlobTask = BlobTask(), hidden=(16, 16), epochs: int = 60) -> ParityResult:
    """Held-out accuracy of MCL (optimal node mapping) and CE (identity mapping) from one init."""
    train, test = task.split(seed)
    model = build(MlpSpec((task.dim, *hidden, task.n_classes), seed=seed))
    accs = {}
    for objective in ("MCL", "CE"):
        cfg = TrainConfig(objective=objective, epochs=epochs, seed=seed)
        trained = train_supervised_pairwise(model, train, cfg).model
        evaluate = make_evaluator(test.features, test.labels, task.n_classes, mapped=objective != "CE")
        accs[objective] = evaluate(trained)[0]
    return ParityResult(accs["MCL"], accs["CE"])


@dataclass(frozen=True)
class TransferResult:
    accuracy: float
    nmi: float
    ndc: int
    cluster_sizes: tuple[int, ...] = field(default=())


def run_transfer(
    seed: int,
    n_outputs: int = 10,
    noise: NoiseSpec = NoiseSpec(1.0, 1.0),
    task: BlobTask = BlobTask(),
    hidden=(16, 16),
    epochs: int = 60,
    objective: str = "MCL",
) -> TransferResult:
    """Train on an unlabeled pool with oracle pair targets; score on the held-out split."""
    train, test = task.split(seed)
    noise = NoiseSpec(noise.similar_recall, noise.dissimilar_recall, seed=seed)
    source = OracleSource(train.labels, noise)
    model = build(MlpSpec((task.dim, *hidden, n_outputs), seed=seed))
    cfg = TrainConfig(objective=objective, epochs=epochs, seed=seed)
    trained = train_unsupervised_transfer(model, train.without_labels(), source, cfg).model
    rep = evaluate_nodes(trained.assign(test.features), test.labels, n_outputs, task.n_classes)
    return TransferResult(rep.accuracy, rep.nmi, rep.ndc, tuple(int(c) for c in rep.cluster_sizes))


# the 2D task is solved from a handful of labels; this one is not
SEMI_TASK = BlobTask(n_classes=4, n_per_class=500, dim=20, separation=3.0, spread=1.0)


@dataclass(frozen=True)
class SemiResult:
    acc_baseline: float
    acc_semi: float
    n_labeled: int

    @property
    def gain(self) -> float:
        return self.acc_semi - self.acc_baseline


def run_semi_supervised(
    seed: int,
    task: BlobTask = SEMI_TASK,
    labeled_fraction: float = 0.02,
    hidden=(32, 32),
    baseline_epochs: int = 500,
    semi_epochs: int = 30,
    augment_scale: float | None = 0.3,
) -> SemiResult:
    """CE on the labeled part alone versus Pseudo-MCL started from that same CE model."""
    train, test = task.split(seed)
    labeled, unlabeled = labeled_split(train, labeled_fraction, seed=seed)
    evaluate = make_evaluator(test.features, test.labels, task.n_classes, mapped=False)
    model = build(MlpSpec((task.dim, *hidden, task.n_classes), seed=seed))
    base_cfg = TrainConfig(objective="CE", epochs=baseline_epochs, decay_epochs=(), seed=seed)
    baseline = train_supervised_pairwise(model, labeled, base_cfg).model
    semi_cfg = TrainConfig(
        epochs=semi_epochs, seed=seed, augment_scale=augment_scale, decay_epochs=(2 * semi_epochs // 3,)
    )
    semi = train_semi_supervised(model, labeled, unlabeled, semi_cfg, pretrained=baseline).model
    return SemiResult(evaluate(baseline)[0], evaluate(semi)[0], len(labeled))


@dataclass
class LandscapeRun:
    solutions: dict[str, Mlp]
    features: np.ndarray
    labels: np.ndarray
    surface: SurfaceResult
    swapped: SurfaceResult | None = None


def train_solutions(seed: int = 0, task: BlobTask = BlobTask(n_per_class=100), epochs: int = 60) -> tuple[dict[str, Mlp], object]:
    """One model per objective from a shared initialization, on the whole dataset."""
    ds = generate_blobs(task.n_classes, task.n_per_class, task.dim, task.separation, task.spread, seed=seed)
    init = build(MlpSpec((task.dim, 16, 16, task.n_classes), seed=seed))
    sols = {
        obj: train_supervised_pairwise(init, ds, TrainConfig(objective=obj, epochs=epochs, seed=seed)).model
        for obj in ("MCL", "CE", "KCL")
    }
    return sols, ds


def run_landscape(
    seed: int = 0, loss: str = "MCL", grid: GridSpec = GridSpec(), swapped: bool = False, threads: int | None = None
) -> LandscapeRun:
    """Mutual projection through the MCL, CE and KCL solutions (origin, alpha=1, beta=1)."""
    sols, ds = train_solutions(seed)
    origin = sols["MCL"]
    delta, eta = mutual_directions(origin.params, sols["CE"].params, sols["KCL"].params)

    def surface(d, e):
        return evaluate_surface(
            origin, origin.params, d, e, grid, ds.features, ds.labels, loss=loss, method="mutual", threads=threads
        )

    run = LandscapeRun(sols, ds.features, ds.labels, surface(delta, eta))
    if swapped:
        run.swapped = surface(eta, delta)
    return run


def own_losses(run: LandscapeRun, loss: str = "MCL") -> dict[str, float]:
    return {name: dataset_loss(m, run.features, run.labels, loss) for name, m in run.solutions.items()}

