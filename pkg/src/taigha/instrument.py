"""Bundled TAIGHA instrument data: codebook, CFA models and published tables."""
from __future__ import annotations

import csv
import json
from importlib import resources

from .dataset import ItemCatalog

_DATA = resources.files("taigha") / "data"


def data_path(name: str):
    return _DATA / name


def read_text(name: str) -> str:
    return (_DATA / name).read_text(encoding="utf-8")


def taigha_catalog() -> ItemCatalog:
    return ItemCatalog.from_dict(json.loads(read_text("taigha_codebook.json")))


def short_form_ids() -> list[str]:
    return list(json.loads(read_text("taigha_codebook.json"))["short_form"])


def model_spec(short: bool = False) -> dict[str, list[str]]:
    name = "taigha_s_model.json" if short else "taigha_model.json"
    return json.loads(read_text(name))["factors"]


def _rows(name: str) -> list[dict]:
    return list(csv.DictReader(read_text(name).splitlines()))


def table2_counts() -> list[dict]:
    """Expert relevance counts for the 28 items left after automated reduction."""
    out = []
    for row in _rows("table2_cvi_counts.csv"):
        out.append(
            {
                "item": row["item"],
                "construct": row["construct"],
                "not_relevant": int(row["not_relevant"]),
                "relevant": int(row["relevant"]),
                "published": float(row["published_cvi"]),
                "note": row["note"] or None,
            }
        )
    return out


def table3_counts() -> list[dict]:
    """Lay-rater clarity counts for the 10 retained items."""
    return [
        {
            "item": row["item"],
            "not_clear": int(row["not_clear"]),
            "clear": int(row["clear"]),
            "published": float(row["published_fvi"]),
            "note": row["note"] or None,
        }
        for row in _rows("table3_fvi_counts.csv")
    ]


def table4_stats() -> list[dict]:
    out = []
    for row in _rows("table4_item_stats.csv"):
        entry = {"item": row.pop("item")}
        entry.update({k: float(v) for k, v in row.items()})
        out.append(entry)
    return out
