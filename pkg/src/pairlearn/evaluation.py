"""Node-to-class mapping and clustering metrics.

Output nodes carry no class identity when training on pairs, so accuracy is
measured after an optimal one-to-one assignment of nodes to classes. Samples
that land on a node left without a class count as errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class Assignment:
    """Matched ``(node, class)`` pairs sorted by node, with their total cost."""

    pairs: tuple[tuple[int, int], ...]
    total: float

    def as_dict(self) -> dict[int, int]:
        return dict(self.pairs)

    def node_to_class(self, n_nodes: int) -> np.ndarray:
        out = np.full(n_nodes, -1, dtype=np.int64)
        for r, c in self.pairs:
            out[r] = c
        return out


def _solve_rows(cost: np.ndarray) -> np.ndarray:
    """Shortest-augmenting-path assignment for ``n <= m``; returns a column per row."""
    n, m = cost.shape
    a = np.zeros((n + 1, m + 1))
    a[1:, 1:] = cost
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j]: row matched to column j (0 = none)
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = a[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            masked = np.where(free, minv, np.inf)
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row


def _optimal_cost(cost: np.ndarray) -> float:
    if cost.size == 0:
        return 0.0
    if cost.shape[0] <= cost.shape[1]:
        cols = _solve_rows(cost)
        return float(sum(cost[r, c] for r, c in enumerate(cols)))
    rows = _solve_rows(cost.T)
    return float(sum(cost[r, c] for c, r in sorted(enumerate(rows), key=lambda t: t[1])))


def hungarian(cost) -> Assignment:
    """Minimum-cost matching of ``min(K, C)`` rows to columns of a K x C matrix.

    Among optimal matchings the lexicographically smallest list of
    ``(row, col)`` pairs is returned, which makes ties deterministic.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.size == 0:
        raise ContractError("hungarian needs a non-empty 2-D cost matrix")
    if not np.all(np.isfinite(cost)):
        raise ContractError("costs must be finite")
    n_rows, n_cols = cost.shape
    target = _optimal_cost(cost)
    tol = 1e-12 * max(1.0, float(np.abs(cost).sum()))

    # Fix rows one at a time to the smallest column that keeps the remainder optimal.
    rows_left = list(range(n_rows))
    cols_left = list(range(n_cols))
    remaining = target
    pairs = []
    while rows_left and cols_left:
        r = rows_left.pop(0)
        chosen = None
        for c in cols_left:
            rest_cols = [x for x in cols_left if x != c]
            sub = _optimal_cost(cost[np.ix_(rows_left, rest_cols)]) if rows_left and rest_cols else 0.0
            if cost[r, c] + sub <= remaining + tol:
                chosen = c
                remaining = sub
                break
        if chosen is None:
            # only possible when rows outnumber columns and this row is better left unmatched
            continue
        pairs.append((r, chosen))
        cols_left.remove(chosen)
    total = float(sum(cost[r, c] for r, c in pairs))
    return Assignment(tuple(pairs), total)


@dataclass(frozen=True)
class ContingencyTable:
    """``counts[k, c]``: samples on output node ``k`` whose true class is ``c``."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise ContractError("contingency table must be 2-D")
        if np.any(counts < 0) or not np.all(counts == np.round(counts)):
            raise ContractError("contingency counts must be nonnegative integers")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @classmethod
    def from_assignments(cls, nodes, labels, n_nodes: int, n_classes: int) -> ContingencyTable:
        nodes = np.asarray(nodes, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        if nodes.shape != labels.shape:
            raise ContractError("need one node and one label per sample")
        if len(nodes) and (nodes.min() < 0 or nodes.max() >= n_nodes):
            raise ContractError("node index out of range")
        if len(labels) and (labels.min() < 0 or labels.max() >= n_classes):
            raise ContractError("class index out of range")
        counts = np.zeros((n_nodes, n_classes), dtype=np.int64)
        np.add.at(counts, (nodes, labels), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def node_sizes(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def class_sizes(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def clustering_accuracy(table: ContingencyTable) -> float:
    """Fraction of samples whose node is matched to their class by the optimal assignment."""
    if table.total == 0:
        raise ContractError("accuracy of an empty table is undefined")
    assignment = hungarian(-table.counts)
    hits = sum(int(table.counts[r, c]) for r, c in assignment.pairs)
    return hits / table.total


def _entropy(sizes: np.ndarray, total: int) -> float:
    return -math.fsum((s / total) * math.log(s / total) for s in sizes.tolist() if s > 0)


def nmi(table: ContingencyTable) -> float:
    """Mutual information normalised by ``sqrt(H(nodes) H(classes))``, natural logs.

    Degenerate cases: 1.0 when both partitions are a single cluster, 0.0 when
    only one of them is.
    """
    n = table.total
    if n == 0:
        raise ContractError("NMI of an empty table is undefined")
    rows, cols = table.node_sizes, table.class_sizes
    h_u, h_v = _entropy(rows, n), _entropy(cols, n)
    if h_u == 0.0 and h_v == 0.0:
        return 1.0
    if h_u == 0.0 or h_v == 0.0:
        return 0.0
    terms = []
    for k, c in zip(*np.nonzero(table.counts)):
        n_kc = int(table.counts[k, c])
        terms.append((n_kc / n) * math.log(n * n_kc / (int(rows[k]) * int(cols[c]))))
    mi = math.fsum(terms)
    return min(1.0, max(0.0, mi / math.sqrt(h_u * h_v)))


def ndc(cluster_sizes, n_samples: int, n_nodes: int) -> int:
    """Number of dominant clusters: clusters at least as large as ``n_samples / n_nodes``."""
    sizes = np.asarray(cluster_sizes, dtype=np.int64)
    if sizes.shape != (n_nodes,):
        raise ContractError(f"expected {n_nodes} cluster sizes, got {sizes.shape}")
    if int(sizes.sum()) != n_samples:
        raise ContractError("cluster sizes must sum to the sample count")
    # size >= N / K, kept in integers
    return int(np.count_nonzero(sizes * n_nodes >= n_samples))


def adif(estimates, truths) -> float:
    """Mean absolute difference between estimated and true class counts."""
    est = np.asarray(estimates, dtype=np.float64)
    tru = np.asarray(truths, dtype=np.float64)
    if est.shape != tru.shape or est.ndim != 1 or est.size == 0:
        raise ContractError("estimates and truths must be equal-length, non-empty lists")
    return float(np.mean(np.abs(est - tru)))


def classification_accuracy(predicted, labels) -> float:
    """Plain accuracy with the identity node-to-class mapping."""
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if predicted.shape != labels.shape or labels.size == 0:
        raise ContractError("need equal-length, non-empty prediction and label arrays")
    return float(np.mean(predicted == labels))


@dataclass
class ClusteringReport:
    accuracy: float
    nmi: float
    ndc: int
    cluster_sizes: np.ndarray


def evaluate_nodes(nodes, labels, n_nodes: int, n_classes: int) -> ClusteringReport:
    table = ContingencyTable.from_assignments(nodes, labels, n_nodes, n_classes)
    return ClusteringReport(
        accuracy=clustering_accuracy(table),
        nmi=nmi(table),
        ndc=ndc(table.node_sizes, table.total, n_nodes),
        cluster_sizes=table.node_sizes,
    )
