"""Loss surfaces ``f(a, b) = L(theta + a * delta + b * eta; D)`` around a solution.

Directions are either random Gaussian vectors rescaled per filter (one filter
= one output unit's weight row, or a whole bias vector) to the norms of the
solution, or differences between the solution and two other solutions.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DomainError
from .losses import DEFAULT_MARGIN, EPS
from .model import Mlp, ParameterVector

LOSSES = ("CE", "MCL", "KCL")


@dataclass(frozen=True)
class GridSpec:
    alpha_range: tuple[float, float] = (-1.0, 1.0)
    beta_range: tuple[float, float] = (-1.0, 1.0)
    resolution: int = 91

    def __post_init__(self):
        if self.resolution < 2:
            raise ConfigError("grid resolution must be >= 2")
        for name in ("alpha_range", "beta_range"):
            lo, hi = getattr(self, name)
            if not lo <= 0.0 <= hi or lo == hi:
                raise ConfigError(f"{name} must be a non-empty interval containing 0, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))

    @staticmethod
    def _axis(lo: float, hi: float, n: int) -> np.ndarray:
        # weighted endpoints: exact 0 at the centre of symmetric odd grids, exact ends
        i = np.arange(n, dtype=np.float64)
        return (lo * (n - 1 - i) + hi * i) / (n - 1)

    @property
    def alphas(self) -> np.ndarray:
        return self._axis(*self.alpha_range, self.resolution)

    @property
    def betas(self) -> np.ndarray:
        return self._axis(*self.beta_range, self.resolution)


@dataclass
class SurfaceResult:
    alphas: np.ndarray
    betas: np.ndarray
    values: np.ndarray  # values[i, j] = f(alphas[i], betas[j])
    loss: str
    method: str
    seed: int | None = None
    log_scale: bool = False

    def at(self, alpha: float, beta: float) -> float:
        i = int(np.flatnonzero(self.alphas == alpha)[0])
        j = int(np.flatnonzero(self.betas == beta)[0])
        return float(self.values[i, j])

    def display_values(self) -> np.ndarray:
        """Values as emitted: log10-transformed when ``log_scale`` is set."""
        if not self.log_scale:
            return self.values
        with np.errstate(divide="ignore"):
            return np.log10(self.values)


def _filter_groups(arr: np.ndarray) -> np.ndarray:
    # rows of a weight matrix; a bias vector is one group
    return arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(1, -1)


def filter_normalize(direction: ParameterVector, reference: ParameterVector) -> ParameterVector:
    """Rescale each filter of ``direction`` to the norm of the same filter in ``reference``.

    Zero-norm direction filters stay zero; a zero reference filter zeroes the
    direction filter.
    """
    direction.check_compatible(reference)
    out = {}
    for name, d in direction.items():
        dg = _filter_groups(d)
        rg = _filter_groups(reference[name])
        d_norm = np.linalg.norm(dg, axis=1, keepdims=True)
        r_norm = np.linalg.norm(rg, axis=1, keepdims=True)
        scale = np.divide(r_norm, d_norm, out=np.zeros_like(d_norm), where=d_norm > 0)
        out[name] = (dg * scale).reshape(d.shape)
    return ParameterVector(out)


def random_directions(reference: ParameterVector, seed: int = 0) -> tuple[ParameterVector, ParameterVector]:
    rng = np.random.default_rng(seed)
    delta = ParameterVector({k: rng.standard_normal(v.shape) for k, v in reference.items()})
    eta = ParameterVector({k: rng.standard_normal(v.shape) for k, v in reference.items()})
    return filter_normalize(delta, reference), filter_normalize(eta, reference)


def mutual_directions(
    origin: ParameterVector, other1: ParameterVector, other2: ParameterVector
) -> tuple[ParameterVector, ParameterVector]:
    """Unnormalised differences, so ``(1, 0)`` and ``(0, 1)`` land on the other solutions."""
    origin.check_compatible(other1)
    origin.check_compatible(other2)
    return other1 - origin, other2 - origin


def dataset_loss(
    model: Mlp,
    features,
    labels,
    loss: str = "MCL",
    sigma: float = DEFAULT_MARGIN,
    eps: float = EPS,
) -> float:
    """Full-dataset loss with every pair enumerated, computed with dense matrix products.

    Same definitions as the training losses (mean over pairs, clamped logs) but
    evaluated without the autodiff graph.
    """
    loss = loss.upper()
    if loss not in LOSSES:
        raise ConfigError(f"loss must be one of {LOSSES}")
    labels = np.asarray(labels, dtype=np.int64)
    probs = model.predict(features)
    n, k = probs.shape
    if loss == "CE":
        if labels.max() >= k:
            raise ContractError("CE needs every label below the number of output nodes")
        picked = np.maximum(probs[np.arange(n), labels], eps)
        return float(np.mean(-np.log(picked)))
    if n < 2:
        raise ContractError("pairwise losses need at least two samples")
    iu = np.triu_indices(n, k=1)
    same = (labels[:, None] == labels[None, :])[iu]
    if loss == "MCL":
        s_hat = np.clip((probs @ probs.T)[iu], eps, 1.0 - eps)
        return float(np.mean(-np.where(same, np.log(s_hat), np.log1p(-s_hat))))
    log_p = np.log(np.maximum(probs, eps))
    self_term = np.sum(probs * log_p, axis=1)
    kl = self_term[:, None] - probs @ log_p.T  # kl[i, j] = KL(p_i || p_j)
    kl_ij, kl_ji = kl[iu], kl.T[iu]
    hinge = np.maximum(sigma - kl_ij, 0.0) + np.maximum(sigma - kl_ji, 0.0)
    return float(np.mean(np.where(same, kl_ij + kl_ji, hinge)))


def default_threads() -> int:
    env = os.environ.get("PAIRLEARN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"PAIRLEARN_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def evaluate_surface(
    model: Mlp,
    origin: ParameterVector,
    delta: ParameterVector,
    eta: ParameterVector,
    grid: GridSpec,
    features,
    labels,
    loss: str = "MCL",
    sigma: float = DEFAULT_MARGIN,
    method: str = "random",
    seed: int | None = None,
    log_scale: bool = False,
    threads: int | None = None,
) -> SurfaceResult:
    """Evaluate the loss on every grid cell; non-finite losses are stored as +inf."""
    origin.check_compatible(delta)
    origin.check_compatible(eta)
    alphas, betas = grid.alphas, grid.betas

    def cell(a: float, b: float) -> float:
        # (a*delta + b*eta) first: swapping the directions then transposes the grid exactly
        try:
            with np.errstate(all="ignore"):
                params = origin + (a * delta + b * eta)
                value = dataset_loss(model.with_params(params), features, labels, loss, sigma)
        except DomainError:
            return math.inf
        return value if math.isfinite(value) else math.inf

    def row(i: int) -> list[float]:
        return [cell(alphas[i], b) for b in betas]

    threads = default_threads() if threads is None else max(1, threads)
    if threads == 1:
        rows = [row(i) for i in range(len(alphas))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, range(len(alphas))))
    return SurfaceResult(alphas, betas, np.array(rows), loss.upper(), method, seed, log_scale)
