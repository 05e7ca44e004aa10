"""Exploratory graph analysis, redundancy removal and bootstrap item stability."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .communities import ItemPartition, detect_communities, nmi
from .network import (
    ItemNetwork,
    NetworkError,
    correlation_from_data,
    ebic_sparse_network,
    nearest_correlation_psd,
)


@dataclass
class EgaConfig:
    gamma: float = 0.5
    n_lambda: int = 100
    lambda_min_ratio: float = 0.01
    walk_steps: int = 4
    uva_threshold: float = 0.25
    stability_cutoff: float = 0.75
    replicates: int = 100
    seed: int = 0
    max_rounds: int = 20
    n_jobs: int = 1

    @classmethod
    def from_dict(cls, data: Mapping) -> "EgaConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def ega(S: np.ndarray, n_effective: float, items: Sequence[str], config: EgaConfig | None = None):
    """Sparse network plus walktrap communities."""
    config = config or EgaConfig()
    net = ebic_sparse_network(
        S, n_effective, config.gamma, items, config.n_lambda, config.lambda_min_ratio
    )
    return net, detect_communities(net, config.walk_steps)


def weighted_topological_overlap(W: np.ndarray) -> np.ndarray:
    A = np.abs(np.asarray(W, dtype=float))
    np.fill_diagonal(A, 0.0)
    shared = A @ A
    s = A.sum(axis=1)
    denom = np.minimum.outer(s, s) + 1.0 - A
    wto = (shared + A) / denom
    np.fill_diagonal(wto, 0.0)
    return wto


@dataclass
class RedundantPair:
    kept: str
    removed: str
    wto: float


def uva_reduce(
    S: np.ndarray,
    items: Sequence[str],
    threshold: float = 0.25,
    n_effective: float | None = None,
    config: EgaConfig | None = None,
) -> tuple[list[str], list[RedundantPair]]:
    """Iteratively drop one member of the most redundant item pair.

    Of the pair with the highest weighted topological overlap above
    ``threshold``, the member whose largest overlap with the other remaining
    items is bigger is removed (ties remove the later item). The network is
    re-estimated after every removal.
    """
    if not 0 < threshold < 1:
        raise ValueError("wTO threshold must lie in (0, 1)")
    config = config or EgaConfig()
    S = np.asarray(S, dtype=float)
    items = list(items)
    n_eff = n_effective if n_effective is not None else 10 * len(items)
    keep = list(range(len(items)))
    pairs: list[RedundantPair] = []
    while len(keep) > 2:
        sub = S[np.ix_(keep, keep)]
        net = ebic_sparse_network(
            sub, n_eff, config.gamma, [items[k] for k in keep], config.n_lambda, config.lambda_min_ratio
        )
        wto = weighted_topological_overlap(net.weights)
        iu = np.triu_indices(len(keep), 1)
        flat = wto[iu]
        top = int(np.argmax(flat))
        if flat[top] <= threshold:
            break
        a, b = iu[0][top], iu[1][top]
        others = [k for k in range(len(keep)) if k not in (a, b)]
        ma = wto[a, others].max() if others else 0.0
        mb = wto[b, others].max() if others else 0.0
        drop, stay = (a, b) if ma > mb else (b, a)
        pairs.append(RedundantPair(items[keep[stay]], items[keep[drop]], float(flat[top])))
        del keep[drop]
    return [items[k] for k in keep], pairs


@dataclass
class StabilityReport:
    per_item_stability: dict[str, float]
    replicate_count: int
    modal_partition: ItemPartition
    reference_partition: ItemPartition | None = None

    def to_dict(self) -> dict:
        return {
            "per_item_stability": self.per_item_stability,
            "replicate_count": self.replicate_count,
            "modal_partition": dict(self.modal_partition.assignment),
            "n_communities": self.modal_partition.n_communities,
        }


def _align(labels: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Relabel ``labels`` to maximise agreement with ``reference``."""
    ul = np.unique(labels)
    ur = np.unique(reference)
    overlap = np.array([[np.sum((labels == a) & (reference == b)) for b in ur] for a in ul])
    rows, cols = linear_sum_assignment(-overlap)
    mapping = {ul[r]: ur[c] for r, c in zip(rows, cols)}
    spare = int(ur.max()) + 1
    for a in ul:
        if a not in mapping:
            mapping[a] = spare
            spare += 1
    return np.array([mapping[a] for a in labels])


def _sampler(S: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _replicate(k, seed, F, n, items, config):
    rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
    X = rng.standard_normal((int(n), F.shape[1])) @ F.T
    R = correlation_from_data(X)
    _, part = ega(R, n, items, config)
    return part.labels(items)


def bootstrap_stability(
    S: np.ndarray,
    n: int,
    replicates: int,
    seed: int,
    items: Sequence[str] | None = None,
    config: EgaConfig | None = None,
) -> StabilityReport:
    """Parametric bootstrap EGA.

    Each replicate draws ``n`` multivariate-normal rows from ``S`` with a
    generator derived from (seed, replicate index), so results do not
    depend on scheduling. Replicate communities are aligned to the EGA
    partition of ``S`` before taking each item's modal community.
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    config = config or EgaConfig()
    S = np.asarray(S, dtype=float)
    items = tuple(items) if items is not None else tuple(f"item_{k + 1}" for k in range(S.shape[0]))
    if np.linalg.eigvalsh(S).min() < -1e-10:
        S = nearest_correlation_psd(S)
    F = _sampler(S)
    _, ref = ega(S, n, items, config)
    ref_labels = ref.labels(items)

    def run(k):
        return _replicate(k, seed, F, n, items, config)

    if config.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            reps = list(pool.map(run, range(replicates)))
    else:
        reps = [run(k) for k in range(replicates)]

    aligned = np.array([_align(r, ref_labels) for r in reps])
    modal, stability = [], {}
    for j, item in enumerate(items):
        vals, counts = np.unique(aligned[:, j], return_counts=True)
        best = int(np.argmax(counts))
        modal.append(int(vals[best]))
        stability[item] = float(counts[best]) / replicates
    return StabilityReport(stability, replicates, ItemPartition.from_labels(items, modal), ref)


@dataclass
class AuditEntry:
    item: str
    stage: str
    reason: str
    detail: dict = field(default_factory=dict)


@dataclass
class GenieResult:
    items_in: list[str]
    retained: list[str]
    nmi_before: float
    nmi_after: float
    initial_partition: ItemPartition
    final_partition: ItemPartition
    stability: StabilityReport
    initial_stability: StabilityReport | None
    audit: list[AuditEntry]
    networks: dict[str, ItemNetwork] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "items_in": self.items_in,
            "retained": self.retained,
            "nmi_before": self.nmi_before,
            "nmi_after": self.nmi_after,
            "initial_partition": dict(self.initial_partition.assignment),
            "final_partition": dict(self.final_partition.assignment),
            "initial_stability": None if self.initial_stability is None else self.initial_stability.to_dict(),
            "final_stability": self.stability.to_dict(),
            "audit": [asdict(a) for a in self.audit],
        }


def genie_reduce(
    items: Sequence[str],
    theory: Mapping[str, str] | ItemPartition,
    similarity: np.ndarray | None = None,
    data: np.ndarray | None = None,
    n_effective: float | None = None,
    config: EgaConfig | None = None,
) -> GenieResult:
    """EGA, NMI against theory, UVA, iterative bootstrap-stability pruning, final EGA.

    Pass either an item ``similarity`` matrix with ``n_effective`` (the
    embedding dimensionality for cosine input) or respondent ``data``.
    """
    config = config or EgaConfig()
    items = list(items)
    if (similarity is None) == (data is None):
        raise ValueError("pass exactly one of similarity or data")
    if data is not None:
        S = correlation_from_data(data)
        n_effective = int(np.sum(~np.isnan(np.asarray(data, dtype=float)).any(axis=1)))
    else:
        S = np.asarray(similarity, dtype=float)
        if n_effective is None:
            raise ValueError("similarity input needs n_effective")
    theory = theory if isinstance(theory, ItemPartition) else ItemPartition(dict(theory))
    missing = set(items) - set(theory.items)
    if missing:
        raise ValueError(f"theory partition does not cover {sorted(missing)}")

    audit: list[AuditEntry] = []
    net0, part0 = ega(S, n_effective, items, config)
    nmi0 = nmi(part0, theory.restrict(items))

    kept, pairs = uva_reduce(S, items, config.uva_threshold, n_effective, config)
    for pr in pairs:
        audit.append(AuditEntry(pr.removed, "uva", "redundant wording", {"kept": pr.kept, "wto": pr.wto}))

    first_report = None
    for round_no in range(1, config.max_rounds + 1):
        idx = [items.index(i) for i in kept]
        report = bootstrap_stability(
            S[np.ix_(idx, idx)], n_effective, config.replicates, config.seed, kept, config
        )
        if first_report is None:
            first_report = report
        unstable = [i for i in kept if report.per_item_stability[i] < config.stability_cutoff]
        if not unstable:
            break
        if len(unstable) == len(kept):
            raise NetworkError("every remaining item is unstable")
        for i in unstable:
            audit.append(
                AuditEntry(
                    i, "bootstrap", "unstable community membership",
                    {"stability": report.per_item_stability[i], "round": round_no},
                )
            )
        kept = [i for i in kept if i not in unstable]
    else:
        raise NetworkError(f"item stability did not settle within {config.max_rounds} rounds")

    idx = [items.index(i) for i in kept]
    net1, part1 = ega(S[np.ix_(idx, idx)], n_effective, kept, config)
    nmi1 = nmi(part1, theory.restrict(kept))
    return GenieResult(
        items_in=items,
        retained=kept,
        nmi_before=nmi0,
        nmi_after=nmi1,
        initial_partition=part0,
        final_partition=part1,
        stability=report,
        initial_stability=first_report,
        audit=audit,
        networks={"initial": net0, "final": net1},
    )
