"""Item descriptives, difficulty and corrected item-total correlations."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, asdict
from typing import Mapping

import numpy as np

from .dataset import ItemCatalog, ResponseMatrix


class ItemStatsError(ValueError):
    pass


@dataclass
class ItemStatsRow:
    item: str
    n: int
    missing_pct: float
    mean: float
    sd: float
    median: float
    iqr_low: float
    iqr_high: float
    skewness: float
    excess_kurtosis: float
    min_observed: float
    max_observed: float
    degenerate: bool = False
    difficulty: float | None = None
    corrected_itc: float | None = None

    def to_dict(self):
        return asdict(self)


def moment_shape(x: np.ndarray) -> tuple[float, float, bool]:
    """Moment-based skewness g1 and excess kurtosis g2 (divisor n).

    Zero-variance input returns (0, 0, True).
    """
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    m2 = np.mean(d**2)
    if m2 <= 0:
        return 0.0, 0.0, True
    m3 = np.mean(d**3)
    m4 = np.mean(d**4)
    return float(m3 / m2**1.5), float(m4 / m2**2 - 3.0), False


def item_descriptives(matrix: ResponseMatrix) -> list[ItemStatsRow]:
    """Pairwise-complete per-item descriptives."""
    rows = []
    data = matrix.as_float()
    n_total = matrix.n_respondents
    for col, item in enumerate(matrix.item_ids):
        x = data[:, col]
        x = x[~np.isnan(x)]
        if x.size < 2:
            raise ItemStatsError(f"item {item!r} has fewer than 2 observations")
        g1, g2, degenerate = moment_shape(x)
        q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75])
        rows.append(
            ItemStatsRow(
                item=item,
                n=int(x.size),
                missing_pct=100.0 * (n_total - x.size) / n_total,
                mean=float(x.mean()),
                sd=float(x.std(ddof=1)),
                median=float(med),
                iqr_low=float(q1),
                iqr_high=float(q3),
                skewness=g1,
                excess_kurtosis=g2,
                min_observed=float(x.min()),
                max_observed=float(x.max()),
                degenerate=degenerate,
            )
        )
    return rows


def difficulty_from_mean(mean: float, scale_max: int) -> float:
    return mean / scale_max


def item_difficulty(matrix: ResponseMatrix, catalog: ItemCatalog) -> dict[str, float]:
    data = matrix.as_float()
    out = {}
    for col, item in enumerate(matrix.item_ids):
        x = data[:, col]
        x = x[~np.isnan(x)]
        if x.size < 2:
            raise ItemStatsError(f"item {item!r} has fewer than 2 observations")
        out[item] = difficulty_from_mean(float(x.mean()), catalog.get(item).scale_max)
    return out


def _pearson(x, y):
    xd = x - x.mean()
    yd = y - y.mean()
    denom = np.sqrt((xd @ xd) * (yd @ yd))
    return float(xd @ yd / denom)


def corrected_item_total(matrix: ResponseMatrix, grouping: Mapping[str, str]) -> dict[str, float]:
    """Correlate each item with the sum of the other items in its subscale.

    Rows are listwise-complete within each subscale.
    """
    groups: dict[str, list[str]] = {}
    for item in matrix.item_ids:
        if item in grouping:
            groups.setdefault(grouping[item], []).append(item)
    out = {}
    for name, members in groups.items():
        if len(members) < 2:
            raise ItemStatsError(f"subscale {name!r} needs at least 2 items")
        x = matrix.as_float(members)
        x = x[~np.isnan(x).any(axis=1)]
        total = x.sum(axis=1)
        for k, item in enumerate(members):
            rest = total - x[:, k]
            if np.ptp(x[:, k]) == 0 or np.ptp(rest) == 0:
                raise ItemStatsError(f"zero variance in item {item!r} or its rest score")
            out[item] = _pearson(x[:, k], rest)
    return out


def item_statistics(
    matrix: ResponseMatrix, catalog: ItemCatalog, grouping: Mapping[str, str] | None = None
) -> list[ItemStatsRow]:
    """Full Table-4-shaped rows: descriptives, difficulty and ITC."""
    rows = item_descriptives(matrix)
    diff = item_difficulty(matrix, catalog)
    grouping = catalog.subscales() if grouping is None else grouping
    itc = corrected_item_total(matrix, grouping) if grouping else {}
    for row in rows:
        row.difficulty = diff[row.item]
        row.corrected_itc = itc.get(row.item)
    return rows


def _fmt_num(v):
    return f"{v:g}" if float(v).is_integer() else f"{v:.2f}"


def table4_markdown(rows: list[ItemStatsRow]) -> str:
    head = (
        "| Item | Missing data (%) | Mean (SD) | Median (IQR) | Skewness | Kurtosis "
        "| Min - Max | Item Difficulty | Item-Total Correlation |"
    )
    lines = [head, "|" + "---|" * 9]
    for r in rows:
        itc = "" if r.corrected_itc is None else f"{r.corrected_itc:.2f}"
        diff = "" if r.difficulty is None else f"{r.difficulty:.2f}"
        lines.append(
            f"| {r.item} | {r.missing_pct:.1f}% | {r.mean:.2f} ({r.sd:.2f}) "
            f"| {_fmt_num(r.median)} ({_fmt_num(r.iqr_low)}-{_fmt_num(r.iqr_high)}) "
            f"| {r.skewness:.1f} | {r.excess_kurtosis:.1f} "
            f"| {r.min_observed:g}-{r.max_observed:g} | {diff} | {itc} |"
        )
    return "\n".join(lines) + "\n"


def table4_csv(rows: list[ItemStatsRow]) -> str:
    buf = io.StringIO()
    fields = list(ItemStatsRow.__dataclass_fields__)
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.to_dict().items()})
    return buf.getvalue()
