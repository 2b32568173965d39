"""Datasets: synthetic blobs, CSV loading/saving, perturbation, and report CSVs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, FormatError


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (len(self.features),):
            raise ContractError("features must be (N, d) with one label per row")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ContractError(f"labels must lie in 0..{self.n_classes - 1}")
        missing = set(range(self.n_classes)) - set(np.unique(self.labels).tolist())
        if missing:
            raise ContractError(f"classes without samples: {sorted(missing)}")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> LabeledDataset:
        return LabeledDataset(self.features[index], self.labels[index], self.n_classes)

    def without_labels(self) -> UnlabeledDataset:
        return UnlabeledDataset(self.features, hidden_labels=self.labels.copy())


@dataclass
class UnlabeledDataset:
    """Features only. ``hidden_labels`` exist for evaluation; training code never reads them."""

    features: np.ndarray
    hidden_labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ContractError("features must be an (N, d) matrix")
        if self.hidden_labels is not None:
            self.hidden_labels = np.asarray(self.hidden_labels, dtype=np.int64)
            if self.hidden_labels.shape != (len(self.features),):
                raise ContractError("hidden_labels must have one entry per row")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def _place_centers(rng: np.random.Generator, n_classes: int, dim: int, radius: float) -> np.ndarray:
    # Centers sit on the sphere of the given radius and are spread out rather
    # than i.i.d., so nearby-class collisions cannot happen for small C.
    if dim == 1:
        # a 0-sphere has only two points; fall back to an even grid on [-r, r]
        centers = np.linspace(-radius, radius, n_classes)[:, None]
        return centers[rng.permutation(n_classes)]
    if dim == 2:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        angles = phase + 2.0 * np.pi * np.arange(n_classes) / n_classes
        return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    if n_classes <= 2 * dim:
        axes = np.concatenate([q.T, -q.T])[:n_classes]
        return radius * axes
    dirs = rng.normal(size=(n_classes, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for _ in range(200):
        diff = dirs[:, None, :] - dirs[None, :, :]
        dist2 = (diff**2).sum(-1) + np.eye(n_classes)
        force = (diff / dist2[..., None] ** 1.5).sum(axis=1)
        dirs += 0.05 * force
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return radius * dirs


def generate_blobs(
    n_classes: int,
    n_per_class: int,
    dim: int,
    separation: float,
    spread: float,
    seed: int = 0,
) -> LabeledDataset:
    """Isotropic Gaussian classes around centers at distance ``separation`` from the origin."""
    if n_classes < 2 or dim < 1 or n_per_class < 1:
        raise ConfigError("need n_classes >= 2, dim >= 1 and n_per_class >= 1")
    if not (separation > 0 and spread > 0):
        raise ConfigError("separation and spread must be positive")
    rng = np.random.default_rng(seed)
    centers = _place_centers(rng, n_classes, dim, float(separation))
    labels = np.repeat(np.arange(n_classes), n_per_class)
    features = centers[labels] + rng.normal(0.0, spread, size=(len(labels), dim))
    order = rng.permutation(len(labels))
    return LabeledDataset(features[order], labels[order], n_classes)


def blob_centers(n_classes: int, dim: int, separation: float, seed: int = 0) -> np.ndarray:
    """The centers ``generate_blobs`` uses for the same arguments."""
    rng = np.random.default_rng(seed)
    return _place_centers(rng, n_classes, dim, float(separation))


def train_test_split(dataset: LabeledDataset, test_fraction: float, seed: int = 0):
    """Stratified split; each class keeps at least one sample on both sides."""
    if not 0 < test_fraction < 1:
        raise ConfigError("test_fraction must be in (0, 1)")
    test_idx = _stratified_pick(dataset.labels, dataset.n_classes, test_fraction, seed)
    mask = np.zeros(len(dataset), dtype=bool)
    mask[test_idx] = True
    return dataset.subset(np.flatnonzero(~mask)), dataset.subset(np.flatnonzero(mask))


def labeled_split(dataset: LabeledDataset, labeled_fraction: float, seed: int = 0):
    """Keep labels on a stratified ``labeled_fraction`` of samples; hide the rest."""
    if not 0 < labeled_fraction <= 1:
        raise ConfigError("labeled_fraction must be in (0, 1]")
    idx = _stratified_pick(dataset.labels, dataset.n_classes, labeled_fraction, seed)
    mask = np.zeros(len(dataset), dtype=bool)
    mask[idx] = True
    rest = np.flatnonzero(~mask)
    unlabeled = UnlabeledDataset(dataset.features[rest], hidden_labels=dataset.labels[rest])
    return dataset.subset(np.flatnonzero(mask)), unlabeled


def _stratified_pick(labels: np.ndarray, n_classes: int, fraction: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    picked = []
    for c in range(n_classes):
        members = np.flatnonzero(labels == c)
        k = min(len(members), max(1, int(round(fraction * len(members)))))
        picked.append(rng.choice(members, size=k, replace=False))
    return np.sort(np.concatenate(picked))


def perturb(features, scale: float, seed: int = 0) -> np.ndarray:
    """Additive Gaussian jitter with standard deviation ``scale``."""
    if scale < 0:
        raise ContractError("perturbation scale must be >= 0")
    features = np.asarray(features, dtype=np.float64)
    if scale == 0:
        return features.copy()
    rng = np.random.default_rng(seed)
    return features + rng.normal(0.0, scale, size=features.shape)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_csv_dataset(dataset: LabeledDataset | UnlabeledDataset, path) -> None:
    """No header; features then the integer label when the dataset has labels."""
    labels = dataset.labels if isinstance(dataset, LabeledDataset) else None
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i, row in enumerate(dataset.features):
            cells = [_fmt(v) for v in row]
            if labels is not None:
                cells.append(str(int(labels[i])))
            writer.writerow(cells)


def load_csv_dataset(path, has_label_column: bool = True) -> LabeledDataset | UnlabeledDataset:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(f"{path}: row {lineno} has {len(row)} cells, expected {width}")
            rows.append((lineno, row))
    if not rows:
        raise FormatError(f"{path}: no data rows")
    n_feat = width - 1 if has_label_column else width
    if n_feat < 1:
        raise FormatError(f"{path}: no feature columns")

    features = np.empty((len(rows), n_feat))
    labels = np.empty(len(rows), dtype=np.int64)
    for r, (lineno, row) in enumerate(rows):
        try:
            features[r] = [float(c) for c in row[:n_feat]]
        except ValueError:
            raise FormatError(f"{path}: row {lineno} has a non-numeric feature cell") from None
        if not np.all(np.isfinite(features[r])):
            raise FormatError(f"{path}: row {lineno} has a non-finite feature")
        if has_label_column:
            try:
                labels[r] = int(row[-1])
            except ValueError:
                raise FormatError(f"{path}: row {lineno} label {row[-1]!r} is not an integer") from None
            if labels[r] < 0:
                raise FormatError(f"{path}: row {lineno} has a negative label")
    if not has_label_column:
        return UnlabeledDataset(features)
    n_classes = int(labels.max()) + 1
    try:
        return LabeledDataset(features, labels, n_classes)
    except ContractError as exc:
        raise FormatError(f"{path}: {exc}") from None


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    accuracy: float = math.nan
    nmi: float = math.nan


@dataclass
class MetricsReport:
    history: list[EpochMetrics] = field(default_factory=list)

    def append(self, epoch: int, loss: float, accuracy: float = math.nan, nmi: float = math.nan) -> None:
        self.history.append(EpochMetrics(epoch, loss, accuracy, nmi))

    @property
    def losses(self) -> list[float]:
        return [row.loss for row in self.history]

    @property
    def final(self) -> EpochMetrics | None:
        return self.history[-1] if self.history else None


def _write_rows(path, header: list[str], rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def write_metrics_csv(report: MetricsReport, path) -> None:
    _write_rows(
        path,
        ["epoch", "loss", "accuracy", "nmi"],
        ([str(r.epoch), _fmt(r.loss), _fmt(r.accuracy), _fmt(r.nmi)] for r in report.history),
    )


def write_surface_csv(surface, path) -> None:
    """Row-major over (alpha, beta): alpha is the slow index.

    Values go through ``surface.display_values()`` when available (log-scaled CE).
    """
    values = surface.display_values() if hasattr(surface, "display_values") else surface.values
    rows = (
        [_fmt(a), _fmt(b), _fmt(values[i, j])]
        for i, a in enumerate(surface.alphas)
        for j, b in enumerate(surface.betas)
    )
    _write_rows(path, ["alpha", "beta", "loss"], rows)


def read_surface_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`write_surface_csv`: ``(alphas, betas, values)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["alpha", "beta", "loss"]:
            raise FormatError(f"{path}: unexpected surface header {header}")
        rows = np.array([[float(c) for c in row] for row in reader])
    alphas = np.unique(rows[:, 0])
    betas = np.unique(rows[:, 1])
    return alphas, betas, rows[:, 2].reshape(len(alphas), len(betas))
