"""Short-form derivation: one item per construct x facet cell.

Within each cell the item with the highest corrected item-total correlation
wins; ties go to the higher CFA loading, and a further tie to the earlier
catalog item (flagged as ambiguous).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import assoc, reliability
from .cfa import CfaModel, fit_from_responses
from .dataset import ResponseMatrix, complete_cases


class ShortFormError(ValueError):
    pass


@dataclass
class CellDecision:
    construct: str
    facet: str
    candidates: list[str]
    selected: str
    rule: str
    ambiguous: bool = False


@dataclass
class ShortFormSelection:
    items: list[str]
    decisions: list[CellDecision] = field(default_factory=list)

    @property
    def ambiguous(self) -> bool:
        return any(d.ambiguous for d in self.decisions)

    def facets(self) -> dict[str, tuple[str, str]]:
        return {d.selected: (d.construct, d.facet) for d in self.decisions}

    def model(self) -> CfaModel:
        groups: dict[str, list[str]] = {}
        for d in self.decisions:
            groups.setdefault(d.construct, []).append(d.selected)
        return CfaModel.from_factor_lists(groups)

    def to_dict(self) -> dict:
        return {
            "items": self.items,
            "facets": {i: {"construct": c, "facet": f} for i, (c, f) in self.facets().items()},
            "decisions": [vars(d) for d in self.decisions],
            "ambiguous": self.ambiguous,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def select_short_form(
    itc: Mapping[str, float],
    facets: Mapping[str, tuple[str, str]],
    loadings: Mapping[str, float],
    per_facet: int = 1,
    cells: Sequence[tuple[str, str]] | None = None,
) -> ShortFormSelection:
    """Pick ``per_facet`` items per (construct, facet) cell.

    ``facets`` iteration order is the catalog order used for the final
    tie-break.
    """
    order = [i for i in facets if i in itc]
    if cells is None:
        cells = []
        for i in order:
            if facets[i] not in cells:
                cells.append(facets[i])
    selected, decisions = [], []
    for construct, facet in cells:
        pool = [i for i in order if facets[i] == (construct, facet)]
        if not pool:
            raise ShortFormError(f"no items in cell ({construct}, {facet})")
        remaining = list(pool)
        for _ in range(min(per_facet, len(pool))):
            best_itc = max(itc[i] for i in remaining)
            tied = [i for i in remaining if itc[i] == best_itc]
            rule, ambiguous = "highest item-total correlation", False
            if len(tied) > 1:
                missing = [i for i in tied if i not in loadings]
                if missing:
                    raise ShortFormError(f"loadings needed to break ITC tie among {tied}")
                best_load = max(loadings[i] for i in tied)
                tied = [i for i in tied if loadings[i] == best_load]
                rule = "item-total correlation tie broken by factor loading"
                if len(tied) > 1:
                    rule = "tied on correlation and loading; earliest catalog item"
                    ambiguous = True
            pick = tied[0]
            remaining.remove(pick)
            selected.append(pick)
            decisions.append(CellDecision(construct, facet, pool, pick, rule, ambiguous))
    return ShortFormSelection(selected, decisions)


def _mean_score(x: np.ndarray) -> np.ndarray:
    return np.nanmean(x, axis=1) if x.size else np.zeros(0)


def subscale_scores(matrix: ResponseMatrix, groups: Mapping[str, Sequence[str]]) -> dict[str, np.ndarray]:
    """Per-respondent mean of each group's items (NaN-aware)."""
    out = {}
    for name, members in groups.items():
        out[name] = _mean_score(matrix.as_float(list(members)))
    return out


def validate_short_form(
    matrix: ResponseMatrix,
    selection: ShortFormSelection,
    full_scale: CfaModel,
    reverse_keyed: Sequence[str] = (),
    externals: Mapping[str, Sequence[float]] | None = None,
    roles: Mapping[str, str] | None = None,
    reliance: Mapping[str, int] | None = None,
) -> dict:
    missing = [i for i in selection.items if i not in matrix.item_ids]
    if missing:
        raise ShortFormError(f"selected items absent from data: {missing}")
    short_model = selection.model()
    full_groups = full_scale.factor_lists()
    short_groups = short_model.factor_lists()

    sample = complete_cases(matrix, full_scale.items)
    full_scores = subscale_scores(sample, full_groups)
    short_scores = subscale_scores(sample, short_groups)
    correlations = {}
    for s_name, s in short_scores.items():
        for f_name, f in full_scores.items():
            r, lo, hi, n = assoc.correlation_with_ci(s, f)
            correlations[f"short_{s_name}~full_{f_name}"] = {"r": r, "ci_low": lo, "ci_high": hi, "n": n}

    fit, idx = fit_from_responses(matrix, short_model)
    rel = reliability.reliability_block(
        matrix, fit, short_groups, [i for i in short_model.items if i in reverse_keyed]
    )
    report = {
        "selection": selection.to_dict(),
        "short_vs_full": correlations,
        "cfa": fit.to_dict(),
        "fit_indices": idx.to_dict(),
        "reliability": rel,
    }
    if externals:
        scores = {f"short_{k}": v for k, v in subscale_scores(matrix, short_groups).items()}
        rows = assoc.validity_report(scores, externals, roles or {}, reliance, matrix.respondent_ids)
        report["validity"] = [r.to_dict() for r in rows]
    return report
