"""Stage runners and the report bundle.

Each stage returns a ``StageResult``: a JSON-ready report, CSV tables and a
Markdown section laid out like the corresponding published table. Markdown
numbers are rounded copies of fields in the JSON report.
"""
from __future__ import annotations

import csv
import io
import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import assoc, reliability
from .cfa import CUTOFFS, CfaFit, CfaModel, FitIndices, fit_from_responses
from .dataset import ItemCatalog, ResponseMatrix, align_to
from .genclient import ConstructSpec, GeneratedItem, embed_items, generate_items
from .itemstats import ItemStatsRow, item_statistics, table4_csv, table4_markdown
from .judge import JudgePanelRatings, prune_by_validity
from .netreduce import EgaConfig, genie_reduce, similarity_from_embeddings
from .shortform import select_short_form, subscale_scores, validate_short_form

LABELS = {
    "trust": "Trust Items",
    "distrust": "Distrust Items",
    "tias": "Trust in Automated Systems Survey",
    "propensity_to_trust": "Propensity to Trust Scale",
    "reading_flow": "Reading Flow Short Scale",
    "self_efficacy": "General Self-Efficacy Short Scale",
    "nasa_mental": "Mental Demand (NASA-TLX)",
    "nasa_physical": "Physical Demand (NASA-TLX)",
    "nasa_temporal": "Temporal Demand (NASA-TLX)",
    "nasa_effort": "Effort (NASA-TLX)",
    "reliance": "Reliance on AI advice",
}


def label(name: str) -> str:
    return LABELS.get(name, name)


def jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, allow_nan=False) + "\n"


def derive_seed(seed: int, stage: str) -> int:
    """Stage sub-seed from the run seed and the stage name."""
    return int(np.random.SeedSequence([int(seed), zlib.crc32(stage.encode("utf-8"))]).generate_state(1)[0])


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in r])
    return buf.getvalue()


def _f2(v) -> str:
    return "n/a" if v is None or (isinstance(v, float) and not math.isfinite(v)) else f"{v:.2f}"


@dataclass
class StageResult:
    name: str
    report: dict
    tables: dict[str, str] = field(default_factory=dict)
    markdown: str = ""


class Bundle:
    """Directory layout: reports/*.json, tables/*.csv, summary.md, meta.json."""

    def __init__(self):
        self.results: list[StageResult] = []

    def add(self, result: StageResult) -> StageResult:
        self.results.append(result)
        return result

    def summary(self) -> str:
        parts = ["# TAIGHA report\n"]
        for r in self.results:
            if r.markdown:
                parts.append(r.markdown.rstrip() + "\n")
        return "\n".join(parts)

    def write(self, root, meta: Mapping) -> Path:
        root = Path(root)
        (root / "reports").mkdir(parents=True, exist_ok=True)
        (root / "tables").mkdir(parents=True, exist_ok=True)
        for r in self.results:
            (root / "reports" / f"{r.name}.json").write_text(dumps(r.report), encoding="utf-8")
            for name, text in r.tables.items():
                (root / "tables" / f"{name}.csv").write_text(text, encoding="utf-8")
        (root / "summary.md").write_text(self.summary(), encoding="utf-8")
        (root / "meta.json").write_text(dumps(meta), encoding="utf-8")
        return root


# ------------------------------------------------------------- judges


def validity_stage(
    panel: JudgePanelRatings,
    cutoff: float = 0.8,
    policy: str = "conservative_leq",
    scale_targets: tuple[float, float] = (0.8, 0.8),
) -> StageResult:
    _, rep = prune_by_validity(panel.item_ids, panel.per_item(), cutoff, scale_targets, policy, panel.kind)
    counts = panel.counts()
    content = panel.kind == "content_relevance"
    name = "content_validity" if content else "face_validity"
    table = "table2_cvi" if content else "table3_fvi"
    title = (
        "## Table 2. Content validity indices" if content else "## Table 3. Face validity indices"
    )
    report = rep.to_dict()
    report.update(
        counts={i: {"not_endorsed": a, "endorsed": b} for i, (a, b) in counts.items()},
        n_judges=panel.n_judges,
        cutoff=cutoff,
        policy=policy,
        scale_targets=list(scale_targets),
    )
    rows = [(i, *counts[i], rep.per_item_index[i], i in rep.retained) for i in panel.item_ids]
    csv_text = _csv(["item", "not_endorsed", "endorsed", "index", "retained"], rows)
    md = f"{title} ({panel.n_judges} judges, cutoff {cutoff:.2f}, policy {policy})\n\n" + rep.to_markdown(counts)
    return StageResult(name, report, {table: csv_text}, md)


# ------------------------------------------------------------ item stats


def itemstats_stage(matrix: ResponseMatrix, catalog: ItemCatalog, items: Sequence[str] | None = None):
    items = list(items or matrix.item_ids)
    sub = matrix.select(items)
    grouping = {i: g for i, g in catalog.subscales().items() if i in items}
    rows = item_statistics(sub, catalog, grouping)
    report = {"n_respondents": matrix.n_respondents, "items": [r.to_dict() for r in rows]}
    md = "## Table 4. Descriptive statistics, item difficulty and corrected item-total correlation\n\n"
    md += table4_markdown(rows)
    return StageResult("item_stats", report, {"table4_item_stats": table4_csv(rows)}, md), rows


# ------------------------------------------------------------------- cfa


def _cfa_markdown(title: str, fit: CfaFit, idx: FitIndices) -> str:
    md = [f"{title} (n = {fit.n_used}, chi-square = {fit.chi_square:.2f}, df = {fit.df})\n", idx.to_markdown()]
    md.append("| Item | Factor | Standardized loading |\n|---|---|---|")
    for i in fit.model.items:
        md.append(f"| {i} | {fit.model.pattern[i]} | {fit.std_loadings[i]:.2f} |")
    for key, v in fit.to_dict()["factor_correlations"].items():
        md.append(f"\nFactor correlation {key}: {v:.2f}")
    if fit.warnings:
        md.append("\nWarnings: " + "; ".join(fit.warnings))
    return "\n".join(md) + "\n"


def cfa_stage(matrix: ResponseMatrix, model: CfaModel, short: bool = False):
    fit, idx = fit_from_responses(matrix, model)
    return cfa_result(fit, idx, short), fit


def cfa_result(fit: CfaFit, idx: FitIndices, short: bool = False) -> StageResult:
    name = "cfa_short" if short else "cfa"
    title = "## Table 11. Fit indices for the short scale" if short else "## Table 8. Fit indices for the two-factor model"
    report = {"fit": fit.to_dict(), "fit_indices": idx.to_dict(), "all_pass": idx.all_pass()}
    rows = [
        (k.upper(), f"{op} {cut:.2f}", getattr(idx, k), idx.passes()[k])
        for k, (op, cut) in CUTOFFS.items()
    ]
    loadings = [(i, fit.model.pattern[i], fit.loadings[i], fit.std_loadings[i], fit.unique_variances[i]) for i in fit.model.items]
    tables = {
        f"{name}_fit_indices": _csv(["index", "cutoff", "value", "pass"], rows),
        f"{name}_loadings": _csv(["item", "factor", "loading", "std_loading", "unique_variance"], loadings),
    }
    return StageResult(name, report, tables, _cfa_markdown(title, fit, idx))


# ------------------------------------------------------------ reliability


def reliability_stage(matrix: ResponseMatrix, fit: CfaFit, catalog: ItemCatalog, short: bool = False) -> StageResult:
    groups = fit.model.factor_lists()
    rev = [i for i in fit.model.items if catalog.get(i).reverse_keyed]
    block = reliability.reliability_block(matrix, fit, groups, rev)
    name = "reliability_short" if short else "reliability"
    md = ["## Reliability" + (" (short scale)" if short else ""), "", "| Scale | Alpha | Omega | Acceptable |", "|---|---|---|---|"]
    for scale, v in block.items():
        md.append(f"| {scale} | {v['alpha']:.2f} | {v['omega']:.2f} | {'yes' if v['acceptable'] else 'no'} |")
    rows = [(k, v["alpha"], v["omega"], v["acceptable"]) for k, v in block.items()]
    report = {"threshold": reliability.ACCEPTABLE, "scales": block}
    return StageResult(name, report, {name: _csv(["scale", "alpha", "omega", "acceptable"], rows)}, "\n".join(md) + "\n")


# --------------------------------------------------------------- validity


def _lower_triangle(names: Sequence[str], series: Mapping[str, np.ndarray]) -> tuple[dict, str, str]:
    _, R = assoc.correlation_table({n: series[n] for n in names})
    nested = {a: {b: float(R[i, j]) for j, b in enumerate(names) if j < i} for i, a in enumerate(names)}
    md = assoc.table_markdown([label(n) for n in names], R)
    rows = [(a, b, float(R[i, j])) for i, a in enumerate(names) for j, b in enumerate(names) if j < i]
    return nested, md, _csv(["row", "column", "r"], rows)


def aligned_externals(matrix: ResponseMatrix, ids: Sequence[str], measures: Mapping[str, np.ndarray]):
    return {k: align_to(matrix.respondent_ids, ids, np.asarray(v, dtype=float)) for k, v in measures.items()}


def validity_assoc_stage(
    matrix: ResponseMatrix,
    model: CfaModel,
    externals: Mapping[str, np.ndarray],
    roles: Mapping[str, str],
    reliance: Mapping[str, int] | None = None,
) -> StageResult:
    """Tables 5-7: convergent, divergent and criterion correlations of the subscales."""
    externals = {k: v for k, v in externals.items() if k in roles}
    scores = subscale_scores(matrix, model.factor_lists())
    rows = assoc.validity_report(scores, externals, roles, reliance, matrix.respondent_ids)
    series = dict(scores)
    series.update(externals)
    conv = list(scores) + [m for m in externals if roles[m] == "convergent"]
    div = list(scores) + [m for m in externals if roles[m] == "divergent"]
    t5, md5, csv5 = _lower_triangle(conv, series)
    t6, md6, csv6 = _lower_triangle(div, series)
    crit = [r for r in rows if r.role == "criterion"]
    report = {
        "scale_scores": "mean of raw subscale items",
        "roles": dict(roles),
        "n_reliance_included": None if reliance is None else len(reliance),
        "table5_convergent": t5,
        "table6_divergent": t6,
        "classifications": [r.to_dict() for r in rows],
    }
    md = ["## Table 5. Convergent validity", "", md5, "## Table 6. Divergent validity", "", md6]
    if crit:
        md += ["## Table 7. Criterion validity", "", "| | Reliance on AI advice | 95% CI | n |", "|---|---|---|---|"]
        for r in crit:
            md.append(f"| {label(r.scale)} | {r.r:.2f} | [{r.ci_low:.2f}, {r.ci_high:.2f}] | {r.n} |")
        md.append("")
    md += ["### Classification", "", assoc.classifications_markdown(rows)]
    tables = {
        "table5_convergent": csv5,
        "table6_divergent": csv6,
        "validity_classifications": assoc.classifications_csv(rows),
    }
    return StageResult("validity", report, tables, "\n".join(md) + "\n")


# -------------------------------------------------------------- shortform


def shortform_stage(
    matrix: ResponseMatrix,
    catalog: ItemCatalog,
    stats_rows: Sequence[ItemStatsRow],
    full_fit: CfaFit,
    externals: Mapping[str, np.ndarray] | None = None,
    roles: Mapping[str, str] | None = None,
    reliance: Mapping[str, int] | None = None,
) -> list[StageResult]:
    itc = {r.item: r.corrected_itc for r in stats_rows if r.corrected_itc is not None}
    facets = {i: f for i, f in catalog.facets().items() if i in full_fit.model.items}
    selection = select_short_form(itc, facets, full_fit.std_loadings)
    model = full_fit.model
    rev = [i for i in model.items if catalog.get(i).reverse_keyed]
    ext = {k: v for k, v in (externals or {}).items() if roles and k in roles}
    rep = validate_short_form(matrix, selection, model, rev, ext or None, roles, reliance)

    short_model = selection.model()
    fit, idx = fit_from_responses(matrix, short_model)
    cfa_res = cfa_result(fit, idx, short=True)
    rel_res = reliability_stage(matrix, fit, catalog, short=True)

    md = ["## Short form selection", "", "| Construct | Facet | Chosen | Rule |", "|---|---|---|---|"]
    for d in selection.decisions:
        md.append(f"| {d.construct} | {d.facet} | {d.selected} | {d.rule} |")
    md.append("")
    short_names = list(short_model.factor_lists())
    full_names = list(model.factor_lists())
    t9: dict[str, dict[str, float]] = {}
    for f in full_names:
        t9[f"full_{f}"] = {s: rep["short_vs_full"][f"short_{s}~full_{f}"]["r"] for s in short_names}
    t10: dict[str, dict[str, float]] = {}
    for row in rep.get("validity", []):
        s = row["scale"].removeprefix("short_")
        target = t10 if row["role"] == "divergent" else t9
        target.setdefault(row["measure"], {})[s] = row["r"]
    header = "| | " + " | ".join(f"Short {s}" for s in short_names) + " |"
    sep = "|---" * (len(short_names) + 1) + "|"
    md += ["## Table 9. Convergent and criterion validity of the short scale", "", header, sep]
    for k, v in t9.items():
        name = f"Full {label(k.removeprefix('full_'))}" if k.startswith("full_") else label(k)
        md.append(f"| {name} | " + " | ".join(_f2(v.get(s)) for s in short_names) + " |")
    if t10:
        md += ["", "## Table 10. Divergent validity of the short scale", "", header, sep]
        for k, v in t10.items():
            md.append(f"| {label(k)} | " + " | ".join(_f2(v.get(s)) for s in short_names) + " |")
    report = dict(rep)
    report["table9"] = t9
    report["table10"] = t10
    rows = [(k, s, v.get(s)) for table in (t9, t10) for k, v in table.items() for s in short_names]
    res = StageResult(
        "shortform",
        report,
        {"shortform_correlations": _csv(["row", "short_subscale", "r"], rows)},
        "\n".join(md) + "\n",
    )
    return [res, cfa_res, rel_res]


# ---------------------------------------------------------------- genie


def generate_stage(spec: ConstructSpec, n: int, provider) -> tuple[StageResult, list[GeneratedItem]]:
    items = generate_items(spec, n, provider)
    ids = [f"g{k + 1:02d}" for k in range(len(items))]
    rows = [(i, g.construct, g.facet, g.text) for i, g in zip(ids, items)]
    report = {
        "n": len(items),
        "items": [{"id": i, "text": g.text, "construct": g.construct, "facet": g.facet} for i, g in zip(ids, items)],
    }
    md = f"## Item generation\n\n{len(items)} candidate items generated.\n"
    return StageResult("generate", report, {"generated_items": _csv(["id", "construct", "facet", "text"], rows)}, md), items


def reduce_stage(
    ids: Sequence[str],
    theory: Mapping[str, str],
    config: EgaConfig,
    embeddings: np.ndarray | None = None,
    data: np.ndarray | None = None,
) -> StageResult:
    if embeddings is not None:
        S = similarity_from_embeddings(embeddings)
        res = genie_reduce(ids, theory, similarity=S, n_effective=embeddings.shape[1], config=config)
    else:
        res = genie_reduce(ids, theory, data=data, config=config)
    report = res.to_dict()
    report["config"] = dict(vars(config))
    net = res.networks["final"]
    edges = _csv(["item_a", "item_b", "weight"], net.edge_list())
    removed = [(a.item, a.stage, a.reason, json.dumps(jsonable(a.detail), sort_keys=True)) for a in res.audit]
    stab = [(i, s) for i, s in res.stability.per_item_stability.items()]
    md = [
        "## Network reduction",
        "",
        f"Items in: {len(res.items_in)}; retained: {len(res.retained)}.",
        f"NMI before reduction: {res.nmi_before:.3f}; after: {res.nmi_after:.3f}.",
        "",
        "| Removed item | Stage | Reason |",
        "|---|---|---|",
    ]
    md += [f"| {a.item} | {a.stage} | {a.reason} |" for a in res.audit]
    if res.stability.per_item_stability:
        lo = min(res.stability.per_item_stability.values())
        hi = max(res.stability.per_item_stability.values())
        md.append(f"\nFinal item stability between {lo:.2f} and {hi:.2f}.")
    tables = {
        "network_edges": edges,
        "reduction_audit": _csv(["item", "stage", "reason", "detail"], removed),
        "item_stability": _csv(["item", "stability"], stab),
    }
    return StageResult("reduce", report, tables, "\n".join(md) + "\n")


def embed_generated(items: Sequence[GeneratedItem], provider) -> np.ndarray:
    return embed_items([g.text for g in items], provider)
