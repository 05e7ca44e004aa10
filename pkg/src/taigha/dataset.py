"""Survey responses, item metadata and the missing-data policy.

Every downstream statistic consumes a :class:`ResponseMatrix`. Values are
stored as integers with a separate boolean missing mask; statistics are
computed in double precision via :meth:`ResponseMatrix.as_float`.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

CONSTRUCTS = ("trust", "distrust", "external")
FACETS = ("cognitive", "affective", "none")
CHOICES = ("emergency", "non_emergency", "self_care")
MISSING_TOKENS = ("", "NA")


class DataError(ValueError):
    """Raised for malformed or out-of-range survey input."""


@dataclass(frozen=True)
class Item:
    id: str
    text: str
    construct: str
    facet: str = "none"
    reverse_keyed: bool = False
    scale_min: int = 1
    scale_max: int = 5
    retained: bool = True
    removal_reason: str | None = None

    def __post_init__(self):
        if self.construct not in CONSTRUCTS:
            raise DataError(f"item {self.id!r}: unknown construct {self.construct!r}")
        if self.facet not in FACETS:
            raise DataError(f"item {self.id!r}: unknown facet {self.facet!r}")
        if not self.scale_min < self.scale_max:
            raise DataError(f"item {self.id!r}: scale_min must be below scale_max")
        if self.retained == bool(self.removal_reason):
            raise DataError(
                f"item {self.id!r}: removal_reason must be set exactly when retained is false"
            )
        if self.retained and self.construct != "external":
            if self.construct not in ("trust", "distrust") or self.facet == "none":
                raise DataError(f"item {self.id!r}: retained scale item needs a facet")

    def reflect(self, value):
        return self.scale_min + self.scale_max - value


@dataclass(frozen=True)
class ItemCatalog:
    items: tuple[Item, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            raise DataError("item ids must be unique")

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __contains__(self, item_id):
        return any(it.id == item_id for it in self.items)

    @property
    def ids(self) -> list[str]:
        return [it.id for it in self.items]

    def get(self, item_id: str) -> Item:
        for it in self.items:
            if it.id == item_id:
                return it
        raise KeyError(item_id)

    def retained(self) -> "ItemCatalog":
        return ItemCatalog(tuple(it for it in self.items if it.retained), self.name)

    def by_construct(self, construct: str) -> list[str]:
        return [it.id for it in self.items if it.construct == construct and it.retained]

    def subscales(self) -> dict[str, str]:
        """Map each retained trust/distrust item to its subscale."""
        return {
            it.id: it.construct
            for it in self.items
            if it.retained and it.construct in ("trust", "distrust")
        }

    def facets(self) -> dict[str, tuple[str, str]]:
        return {it.id: (it.construct, it.facet) for it in self.items if it.retained}

    def mark_removed(self, removals: dict[str, str]) -> "ItemCatalog":
        items = []
        for it in self.items:
            if it.id in removals:
                it = replace(it, retained=False, removal_reason=removals[it.id])
            items.append(it)
        return ItemCatalog(tuple(items), self.name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "items": [
                {
                    "id": it.id,
                    "text": it.text,
                    "construct": it.construct,
                    "facet": it.facet,
                    "reverse_keyed": it.reverse_keyed,
                    "scale_min": it.scale_min,
                    "scale_max": it.scale_max,
                    "retained": it.retained,
                    "removal_reason": it.removal_reason,
                }
                for it in self.items
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ItemCatalog":
        return cls(tuple(Item(**entry) for entry in data["items"]), data.get("name", ""))

    @classmethod
    def from_json(cls, path) -> "ItemCatalog":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class ResponseMatrix:
    """Respondents x items Likert grid.

    ``values`` holds integers; cells flagged in ``missing_mask`` carry 0 and
    must not be read.
    """

    values: np.ndarray
    missing_mask: np.ndarray
    item_ids: tuple[str, ...]
    respondent_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=np.int64, copy=True)
        mask = np.array(self.missing_mask, dtype=bool, copy=True)
        if values.ndim != 2:
            values = values.reshape(-1, len(self.item_ids))
            mask = mask.reshape(values.shape)
        if values.shape != mask.shape or values.shape[1] != len(self.item_ids):
            raise DataError("values, mask and item ids disagree in shape")
        values[mask] = 0
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing_mask", mask)
        object.__setattr__(self, "item_ids", tuple(self.item_ids))
        rids = tuple(str(r) for r in self.respondent_ids)
        if not rids:
            rids = tuple(str(i + 1) for i in range(values.shape[0]))
        if len(rids) != values.shape[0]:
            raise DataError("respondent ids do not match row count")
        object.__setattr__(self, "respondent_ids", rids)

    @property
    def n_respondents(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape

    def column(self, item_id: str) -> int:
        try:
            return self.item_ids.index(item_id)
        except ValueError:
            raise KeyError(item_id) from None

    def as_float(self, item_subset: Sequence[str] | None = None) -> np.ndarray:
        """Float copy with NaN in missing cells, optionally column-subset."""
        out = self.values.astype(float)
        out[self.missing_mask] = np.nan
        if item_subset is not None:
            out = out[:, [self.column(i) for i in item_subset]]
        return out

    def missing_fraction(self) -> dict[str, float]:
        if self.n_respondents == 0:
            return {i: 0.0 for i in self.item_ids}
        frac = self.missing_mask.mean(axis=0)
        return dict(zip(self.item_ids, frac.tolist()))

    def select(self, item_subset: Sequence[str]) -> "ResponseMatrix":
        cols = [self.column(i) for i in item_subset]
        return ResponseMatrix(
            self.values[:, cols], self.missing_mask[:, cols], tuple(item_subset), self.respondent_ids
        )

    def rows(self, index) -> "ResponseMatrix":
        index = np.asarray(index)
        rids = np.asarray(self.respondent_ids, dtype=object)[index]
        return ResponseMatrix(
            self.values[index], self.missing_mask[index], self.item_ids, tuple(rids)
        )

    def equals(self, other: "ResponseMatrix") -> bool:
        return (
            self.item_ids == other.item_ids
            and np.array_equal(self.missing_mask, other.missing_mask)
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class DecisionRecord:
    respondent_id: str
    scenario_id: str
    initial_choice: str
    ai_advice: str
    final_choice: str

    def __post_init__(self):
        for name in ("initial_choice", "ai_advice", "final_choice"):
            if getattr(self, name) not in CHOICES:
                raise DataError(f"{name} must be one of {CHOICES}, got {getattr(self, name)!r}")


def load_responses(source: TextIO | str | Path, catalog: ItemCatalog) -> ResponseMatrix:
    """Parse a CSV of Likert responses against ``catalog``.

    The first column may hold respondent ids; it is treated as such when its
    header is not a catalog id. Empty cells and ``NA`` are missing.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_responses(fh, catalog)
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty input: no header row") from None
    has_id = bool(header) and header[0] not in catalog
    item_ids = header[1:] if has_id else header
    for col, item_id in enumerate(item_ids):
        if item_id not in catalog:
            raise DataError(f"unknown column id {item_id!r} (column {col + 1 + has_id})")
    if len(set(item_ids)) != len(item_ids):
        raise DataError("duplicate item columns in header")
    bounds = [(catalog.get(i).scale_min, catalog.get(i).scale_max) for i in item_ids]

    values, mask, rids = [], [], []
    for rownum, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise DataError(f"ragged row {rownum}: expected {len(header)} cells, got {len(row)}")
        if has_id:
            rids.append(row[0].strip())
            row = row[1:]
        vrow, mrow = [], []
        for item_id, cell, (lo, hi) in zip(item_ids, row, bounds):
            cell = cell.strip()
            if cell in MISSING_TOKENS:
                vrow.append(0)
                mrow.append(True)
                continue
            try:
                v = int(cell)
            except ValueError:
                raise DataError(
                    f"non-integer value {cell!r} at row {rownum}, column {item_id!r}"
                ) from None
            if not lo <= v <= hi:
                raise DataError(
                    f"out-of-range value {v} at row {rownum}, column {item_id!r} "
                    f"(allowed {lo}-{hi})"
                )
            vrow.append(v)
            mrow.append(False)
        values.append(vrow)
        mask.append(mrow)

    shape = (len(values), len(item_ids))
    return ResponseMatrix(
        np.array(values, dtype=np.int64).reshape(shape),
        np.array(mask, dtype=bool).reshape(shape),
        tuple(item_ids),
        tuple(rids),
    )


def write_responses(matrix: ResponseMatrix, sink: TextIO | None = None, id_column="respondent_id"):
    """Serialize ``matrix`` to CSV; returns the text when ``sink`` is None."""
    buf = sink if sink is not None else io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([id_column, *matrix.item_ids])
    for rid, vals, miss in zip(matrix.respondent_ids, matrix.values, matrix.missing_mask):
        writer.writerow([rid, *("NA" if m else str(int(v)) for v, m in zip(vals, miss))])
    if sink is None:
        return buf.getvalue()
    return None


def apply_reverse_scoring(matrix: ResponseMatrix, catalog: ItemCatalog) -> ResponseMatrix:
    values = matrix.values.copy()
    for col, item_id in enumerate(matrix.item_ids):
        item = catalog.get(item_id)
        if item.reverse_keyed:
            values[:, col] = item.reflect(values[:, col])
    return ResponseMatrix(values, matrix.missing_mask, matrix.item_ids, matrix.respondent_ids)


def complete_cases(matrix: ResponseMatrix, item_subset: Iterable[str] | None = None) -> ResponseMatrix:
    """Listwise deletion on ``item_subset`` (all items when None)."""
    subset = list(matrix.item_ids if item_subset is None else item_subset)
    cols = [matrix.column(i) for i in subset]
    keep = ~matrix.missing_mask[:, cols].any(axis=1)
    if matrix.n_respondents and not keep.any():
        raise DataError("no complete cases")
    if matrix.n_respondents == 0:
        raise DataError("no complete cases")
    return matrix.rows(np.flatnonzero(keep))


def load_decisions(path) -> list[DecisionRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [DecisionRecord(**{k: v.strip() for k, v in row.items()}) for row in csv.DictReader(fh)]


def write_decisions(records: Sequence[DecisionRecord], sink: TextIO | None = None):
    buf = sink if sink is not None else io.StringIO()
    fields = ["respondent_id", "scenario_id", "initial_choice", "ai_advice", "final_choice"]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for r in records:
        writer.writerow([getattr(r, f) for f in fields])
    return buf.getvalue() if sink is None else None


def load_externals(path) -> tuple[tuple[str, ...], dict[str, np.ndarray]]:
    """Companion-instrument scores: a respondent id column plus one column per measure."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty externals file") from None
        ids, cols = [], [[] for _ in header[1:]]
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: ragged row {rownum}")
            ids.append(row[0].strip())
            for k, cell in enumerate(row[1:]):
                cell = cell.strip()
                try:
                    cols[k].append(np.nan if cell in MISSING_TOKENS else float(cell))
                except ValueError:
                    raise DataError(f"{path}: non-numeric {cell!r} at row {rownum}, column {header[k + 1]!r}") from None
    return tuple(ids), {name: np.array(c) for name, c in zip(header[1:], cols)}


def write_externals(ids: Sequence[str], measures: dict, sink: TextIO | None = None):
    buf = sink if sink is not None else io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = list(measures)
    writer.writerow(["respondent_id", *names])
    for k, rid in enumerate(ids):
        writer.writerow([rid, *("NA" if np.isnan(measures[m][k]) else repr(float(measures[m][k])) for m in names)])
    if sink is None:
        return buf.getvalue()
    return None


def align_to(ids: Sequence[str], source_ids: Sequence[str], values: np.ndarray) -> np.ndarray:
    """Reorder ``values`` (keyed by ``source_ids``) onto ``ids``; absent ids become NaN."""
    pos = {rid: k for k, rid in enumerate(source_ids)}
    out = np.full(len(ids), np.nan)
    for k, rid in enumerate(ids):
        if rid in pos:
            out[k] = values[pos[rid]]
    return out
