"""Item partitions, walktrap community detection and normalized mutual information."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .network import ItemNetwork


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class ItemPartition:
    """Community labels relabelled 1..k in order of first appearance."""

    assignment: Mapping[str, int]

    def __post_init__(self):
        relabel: dict = {}
        out = {}
        for item, label in self.assignment.items():
            if label not in relabel:
                relabel[label] = len(relabel) + 1
            out[item] = relabel[label]
        object.__setattr__(self, "assignment", out)

    @classmethod
    def from_labels(cls, items: Sequence[str], labels: Sequence) -> "ItemPartition":
        if len(items) != len(labels):
            raise PartitionError("items and labels differ in length")
        return cls(dict(zip(items, labels)))

    @property
    def items(self) -> tuple[str, ...]:
        return tuple(self.assignment)

    @property
    def n_communities(self) -> int:
        return len(set(self.assignment.values()))

    def labels(self, items: Sequence[str] | None = None) -> np.ndarray:
        items = self.items if items is None else items
        return np.array([self.assignment[i] for i in items])

    def restrict(self, items: Sequence[str]) -> "ItemPartition":
        return ItemPartition({i: self.assignment[i] for i in items})

    def communities(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for i, c in self.assignment.items():
            out.setdefault(c, []).append(i)
        return out

    def canonical(self) -> tuple[int, ...]:
        return tuple(self.labels())


def _with_loops(A: np.ndarray) -> np.ndarray:
    # walktrap convention: each vertex gets a self-loop carrying the mean
    # weight of its incident edges (weight 1 for isolated vertices)
    A = A.copy()
    deg = np.count_nonzero(A, axis=1)
    strength = A.sum(axis=1)
    loop = np.where(deg > 0, strength / np.maximum(deg, 1), 1.0)
    A[np.diag_indices_from(A)] = loop
    return A


def modularity(A: np.ndarray, labels: Sequence[int]) -> float:
    labels = np.asarray(labels)
    two_m = A.sum()
    if two_m <= 0:
        return 0.0
    k = A.sum(axis=1)
    q = 0.0
    for c in np.unique(labels):
        members = labels == c
        q += A[np.ix_(members, members)].sum() / two_m - (k[members].sum() / two_m) ** 2
    return float(q)


def walktrap(A: np.ndarray, steps: int = 4) -> tuple[np.ndarray, list[tuple[int, int]], list[float]]:
    """Pons-Latapy agglomeration on a non-negative weighted adjacency matrix.

    Returns the modularity-maximising membership, the merge sequence (as
    pairs of community ids, original vertices first, merged communities
    numbered from n upwards) and the modularity after each merge, starting
    from singletons.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 0:
        raise PartitionError("empty network")
    if np.any(A < 0):
        raise PartitionError("walktrap needs non-negative weights")
    A0 = A.copy()
    np.fill_diagonal(A0, 0.0)
    Al = _with_loops(A0)
    d = Al.sum(axis=1)
    P = Al / d[:, None]
    Pt = np.linalg.matrix_power(P, steps)
    scaled = Pt / np.sqrt(d)[None, :]

    vecs = [scaled[i] for i in range(n)]
    sizes = [1] * n
    members = [[i] for i in range(n)]
    adj = A0 > 0
    cadj = [set(np.flatnonzero(adj[i]).tolist()) for i in range(n)]
    alive = list(range(n))
    labels = np.arange(n)
    best_labels = labels.copy()
    qs = [modularity(A0, labels)]
    best_q = qs[0]
    merges = []

    while True:
        best = None
        for a in alive:
            for b in cadj[a]:
                if b <= a:
                    continue
                diff = vecs[a] - vecs[b]
                ds = sizes[a] * sizes[b] / (sizes[a] + sizes[b]) * float(diff @ diff) / n
                if best is None or ds < best[0] - 1e-15:
                    best = (ds, a, b)
        if best is None:
            break
        _, a, b = best
        sa, sb = sizes[a], sizes[b]
        vecs.append((sa * vecs[a] + sb * vecs[b]) / (sa + sb))
        sizes.append(sa + sb)
        members.append(members[a] + members[b])
        new = len(vecs) - 1
        nb = (cadj[a] | cadj[b]) - {a, b}
        cadj.append(nb)
        for c in nb:
            cadj[c].discard(a)
            cadj[c].discard(b)
            cadj[c].add(new)
        cadj[a] = set()
        cadj[b] = set()
        alive = [c for c in alive if c not in (a, b)] + [new]
        merges.append((a, b))
        for v in members[new]:
            labels[v] = new
        q = modularity(A0, labels)
        qs.append(q)
        if q > best_q + 1e-12:
            best_q = q
            best_labels = labels.copy()
    return best_labels, merges, qs


def detect_communities(network: ItemNetwork, steps: int = 4) -> ItemPartition:
    """Walktrap on absolute edge weights; isolated items become singletons."""
    if len(network.items) == 0:
        raise PartitionError("empty network")
    labels, _, _ = walktrap(np.abs(network.weights), steps)
    return ItemPartition.from_labels(network.items, labels.tolist())


def _xlogx_terms(counts: np.ndarray, total: float) -> float:
    c = counts[counts > 0]
    return float(np.sum(c * np.log(c / total)))


def nmi(a: ItemPartition | Mapping[str, int], b: ItemPartition | Mapping[str, int]) -> float:
    """Normalized mutual information with sum normalisation.

    Two single-community partitions are identical and score 1.
    """
    a = a if isinstance(a, ItemPartition) else ItemPartition(dict(a))
    b = b if isinstance(b, ItemPartition) else ItemPartition(dict(b))
    if set(a.items) != set(b.items):
        raise PartitionError("partitions cover different item sets")
    items = a.items
    la, lb = a.labels(items), b.labels(items)
    N = float(len(items))
    ua, ia = np.unique(la, return_inverse=True)
    ub, ib = np.unique(lb, return_inverse=True)
    table = np.zeros((ua.size, ub.size))
    np.add.at(table, (ia, ib), 1.0)
    rows, cols = table.sum(axis=1), table.sum(axis=0)
    denom = _xlogx_terms(rows, N) + _xlogx_terms(cols, N)
    if denom == 0.0:
        return 1.0
    nz = table > 0
    num = -2.0 * np.sum(table[nz] * np.log(table[nz] * N / np.outer(rows, cols)[nz]))
    return float(num / denom)
