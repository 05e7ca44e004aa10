"""Content- and face-validity indices from judge panels.

Ratings on the 4-point scale are dichotomised ({1, 2} -> 0, {3, 4} -> 1) and
averaged per item. Relevance (experts) and clarity (lay raters) share one
code path; only the labels differ.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

KIND_LABELS = {
    "content_relevance": ("CVI", "Rated as not relevant (n)", "Rated as relevant (n)"),
    "face_clarity": (
        "FVI",
        "Rated as not clear and understandable (n)",
        "Rated as clear and understandable (n)",
    ),
}
POLICIES = ("strict_below", "conservative_leq")


class ValidityError(ValueError):
    pass


@dataclass(frozen=True)
class JudgePanelRatings:
    item_ids: tuple[str, ...]
    ratings: np.ndarray  # judges x items, integers 1..4
    kind: str = "content_relevance"

    def __post_init__(self):
        r = np.array(self.ratings, dtype=np.int64, copy=True)
        if r.ndim != 2 or r.shape[1] != len(self.item_ids):
            raise ValidityError("ratings must be a judges x items grid")
        if r.size and (r.min() < 1 or r.max() > 4):
            raise ValidityError("ratings must lie in 1..4")
        if self.kind not in KIND_LABELS:
            raise ValidityError(f"unknown rating kind {self.kind!r}")
        r.setflags(write=False)
        object.__setattr__(self, "ratings", r)
        object.__setattr__(self, "item_ids", tuple(self.item_ids))

    @property
    def n_judges(self) -> int:
        return self.ratings.shape[0]

    def per_item(self) -> dict[str, float]:
        return {i: item_validity_index(self.ratings[:, k]) for k, i in enumerate(self.item_ids)}

    def counts(self) -> dict[str, tuple[int, int]]:
        """(not endorsed, endorsed) counts per item."""
        hi = (self.ratings >= 3).sum(axis=0)
        return {i: (int(self.n_judges - h), int(h)) for i, h in zip(self.item_ids, hi)}

    @classmethod
    def from_counts(cls, counts: Mapping[str, tuple[int, int]], kind="content_relevance"):
        """Ratings grid consistent with (not endorsed, endorsed) counts.

        Non-endorsing judges are given 2 and endorsing judges 4; every judge
        panel with these counts yields identical indices.
        """
        totals = {a + b for a, b in counts.values()}
        if len(totals) != 1:
            raise ValidityError("every item needs the same number of judges")
        n = totals.pop()
        grid = np.empty((n, len(counts)), dtype=np.int64)
        for k, (lo, hi) in enumerate(counts.values()):
            grid[:lo, k] = 2
            grid[lo:, k] = 4
        return cls(tuple(counts), grid, kind)

    @classmethod
    def from_csv(cls, path, kind="content_relevance"):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValidityError(f"{path}: empty ratings file")
        header, body = rows[0], [r for r in rows[1:] if r]
        has_id = header[0].strip().lower() in ("judge", "judge_id", "rater", "rater_id", "id")
        items = header[1:] if has_id else header
        grid = []
        for lineno, r in enumerate(body, start=2):
            cells = r[1:] if has_id else r
            if len(cells) != len(items):
                raise ValidityError(f"{path}: ragged row {lineno}")
            try:
                grid.append([int(c) for c in cells])
            except ValueError:
                raise ValidityError(f"{path}: missing or non-integer rating on row {lineno}") from None
        return cls(tuple(i.strip() for i in items), np.array(grid, dtype=np.int64).reshape(-1, len(items)), kind)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["judge", *self.item_ids])
            for j, row in enumerate(self.ratings, start=1):
                w.writerow([j, *row.tolist()])


@dataclass
class Removal:
    item: str
    index: float
    reason: str
    scale_average: float | None
    universal_agreement: float | None


@dataclass
class ValidityReport:
    per_item_index: dict[str, float]
    retained: list[str]
    scale_average: float
    universal_agreement: float
    removed_items: list[Removal] = field(default_factory=list)
    kind: str = "content_relevance"

    def to_dict(self) -> dict:
        label = KIND_LABELS[self.kind][0]
        return {
            "kind": self.kind,
            "per_item_index": self.per_item_index,
            "retained": self.retained,
            f"S-{label}/Ave": self.scale_average,
            f"S-{label}/UA": self.universal_agreement,
            "removed_items": [vars(r) for r in self.removed_items],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_markdown(self, counts: Mapping[str, tuple[int, int]] | None = None) -> str:
        label, neg, pos = KIND_LABELS[self.kind]
        lines = []
        if counts is not None:
            lines.append(f"| Item | {neg} | {pos} | {label}-I | Retained |")
            lines.append("|---|---|---|---|---|")
            for item, idx in self.per_item_index.items():
                lo, hi = counts[item]
                kept = "yes" if item in self.retained else "no"
                lines.append(f"| {item} | {lo} | {hi} | {idx:.2f} | {kept} |")
        else:
            lines.append(f"| Item | {label}-I | Retained |")
            lines.append("|---|---|---|")
            for item, idx in self.per_item_index.items():
                kept = "yes" if item in self.retained else "no"
                lines.append(f"| {item} | {idx:.2f} | {kept} |")
        lines.append("")
        lines.append(
            f"S-{label}/Ave = {self.scale_average:.2f}; S-{label}/UA = {self.universal_agreement:.2f}"
        )
        return "\n".join(lines) + "\n"


def item_validity_index(ratings_for_item: Sequence[int]) -> float:
    """Share of judges rating the item 3 or 4."""
    r = np.asarray(ratings_for_item)
    if r.size == 0:
        raise ValidityError("cannot compute a validity index from zero ratings")
    if r.min() < 1 or r.max() > 4:
        raise ValidityError("ratings must lie in 1..4")
    return float(np.count_nonzero(r >= 3)) / r.size


def scale_validity_indices(per_item: Mapping[str, float]) -> tuple[float, float]:
    """Return (scale average, universal agreement)."""
    if not per_item:
        raise ValidityError("no items to summarise")
    vals = np.fromiter(per_item.values(), dtype=float)
    return float(vals.mean()), float(np.count_nonzero(vals == 1.0)) / vals.size


def prune_by_validity(
    items: Sequence[str],
    per_item: Mapping[str, float],
    item_cutoff: float = 0.8,
    scale_targets: tuple[float, float] = (0.8, 0.8),
    policy: str = "conservative_leq",
    kind: str = "content_relevance",
) -> tuple[list[str], ValidityReport]:
    """Drop items below ``item_cutoff``, then iteratively drop the lowest.

    ``items`` fixes the catalog order of retained items. Items sharing the
    lowest index are removed together. Under ``conservative_leq`` the first
    iterative pass removes every item sitting exactly at the cutoff.
    """
    if policy not in POLICIES:
        raise ValidityError(f"unknown policy {policy!r}")
    missing = [i for i in items if i not in per_item]
    if missing:
        raise ValidityError(f"no validity index for {missing}")
    avg_min, ua_min = scale_targets
    retained = list(items)
    removed: list[Removal] = []

    def drop(batch, reason):
        for i in batch:
            retained.remove(i)
        if retained:
            avg, ua = scale_validity_indices({i: per_item[i] for i in retained})
        else:
            avg = ua = None
        for i in batch:
            removed.append(Removal(i, per_item[i], reason, avg, ua))

    below = [i for i in retained if per_item[i] < item_cutoff]
    if below:
        drop(below, f"index below item cutoff {item_cutoff:g}")
    if not retained:
        raise ValidityError(f"every item falls below the item cutoff {item_cutoff:g}")

    def unmet():
        if not retained:
            return True
        avg, ua = scale_validity_indices({i: per_item[i] for i in retained})
        return avg < avg_min or ua < ua_min

    if unmet() and policy == "conservative_leq" and retained:
        at_cut = [i for i in retained if per_item[i] == item_cutoff]
        if at_cut and len(at_cut) < len(retained):
            drop(at_cut, f"conservative removal of items at cutoff {item_cutoff:g}")

    while unmet():
        if len(retained) <= 1:
            raise ValidityError(
                f"scale targets {scale_targets} unreachable even with one item left"
            )
        lowest = min(per_item[i] for i in retained)
        batch = [i for i in retained if per_item[i] == lowest]
        if len(batch) == len(retained):
            raise ValidityError(f"scale targets {scale_targets} unreachable: all items tied")
        drop(batch, "lowest index while scale targets unmet")

    avg, ua = scale_validity_indices({i: per_item[i] for i in retained})
    report = ValidityReport(
        per_item_index={i: per_item[i] for i in items},
        retained=retained,
        scale_average=avg,
        universal_agreement=ua,
        removed_items=removed,
        kind=kind,
    )
    return retained, report


def assess_panel(
    panel: JudgePanelRatings,
    item_cutoff: float = 0.8,
    scale_targets: tuple[float, float] = (0.8, 0.8),
    policy: str = "conservative_leq",
) -> ValidityReport:
    _, report = prune_by_validity(
        panel.item_ids, panel.per_item(), item_cutoff, scale_targets, policy, panel.kind
    )
    return report
