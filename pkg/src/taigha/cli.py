"""Command-line interface: one subcommand per analysis stage plus ``pipeline``.

Single-stage commands print their JSON report to stdout, or write a bundle
with ``--out``. ``simulate`` prints response CSV so it can feed ``cfa``::

    taigha simulate --preset figure1_full --n 385 --seed 7 | taigha cfa --model taigha.json
"""
from __future__ import annotations

import argparse
import datetime as _dt
import io
import json
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import assoc, reports
from .cfa import CfaModel, baseline_independence_fit, fit_cfa, fit_indices
from .dataset import (
    ItemCatalog,
    load_decisions,
    load_externals,
    load_responses,
    write_decisions,
    write_externals,
    write_responses,
)
from .genclient import ConstructSpec, ProviderConfig, make_provider
from .instrument import data_path, table2_counts, table3_counts, taigha_catalog
from .judge import JudgePanelRatings
from .netreduce import EgaConfig
from .simulate import PRESETS, PopulationModel, load_preset, simulate_responses


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


BUNDLED_MODELS = {
    "taigha": "taigha_model.json",
    "taigha.json": "taigha_model.json",
    "taigha_s": "taigha_s_model.json",
    "taigha_s.json": "taigha_s_model.json",
}


def resolve_model(ref: str) -> CfaModel:
    p = Path(ref)
    if p.exists():
        return CfaModel.from_json(p)
    if ref in BUNDLED_MODELS:
        return CfaModel.from_json(data_path(BUNDLED_MODELS[ref]))
    raise FileNotFoundError(f"model {ref!r} is neither a file nor one of {sorted(BUNDLED_MODELS)}")


def resolve_catalog(ref: str | None) -> ItemCatalog:
    return taigha_catalog() if ref is None else ItemCatalog.from_json(ref)


def read_responses(ref: str, catalog: ItemCatalog):
    if ref == "-":
        return load_responses(io.StringIO(sys.stdin.read()), catalog)
    return load_responses(ref, catalog)


def normalise_policy(policy: str) -> str:
    return policy.replace("-", "_")


def panel_from(ratings: str | None, bundled: str, kind: str) -> JudgePanelRatings:
    if ratings:
        return JudgePanelRatings.from_csv(ratings, kind)
    if bundled == "table2":
        counts = {r["item"]: (r["not_relevant"], r["relevant"]) for r in table2_counts()}
    else:
        counts = {r["item"]: (r["not_clear"], r["clear"]) for r in table3_counts()}
    return JudgePanelRatings.from_counts(counts, kind)


def load_roles(ref: str | None) -> dict[str, str]:
    if ref is None:
        return dict(assoc.DEFAULT_ROLES)
    with open(ref, encoding="utf-8") as fh:
        return json.load(fh)


def reliance_codes(ref: str | None):
    if not ref:
        return None
    _, codes = assoc.code_reliance(load_decisions(ref))
    return codes


def _meta(args_or_config, seed) -> dict:
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    return {
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "version": version,
        "seed": seed,
        "invocation": args_or_config,
    }


def emit(results, out: str | None, meta: dict):
    if out:
        bundle = reports.Bundle()
        for r in results:
            bundle.add(r)
        bundle.write(out, meta)
        print(out)
    else:
        payload = results[0].report if len(results) == 1 else {r.name: r.report for r in results}
        sys.stdout.write(reports.dumps(payload))


def run(stage: str, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (KeyboardInterrupt, SystemExit, StageError):
        raise
    except Exception as exc:  # every failure is reported with its stage tag
        raise StageError(stage, exc) from exc


# ------------------------------------------------------------- commands


def cmd_validate(args, kind):
    panel = panel_from(args.ratings, "table2" if kind == "content_relevance" else "table3", kind)
    res = reports.validity_stage(panel, args.cutoff, normalise_policy(args.policy), tuple(args.scale_targets))
    return [res]


def cmd_item_stats(args):
    catalog = resolve_catalog(args.codebook)
    matrix = read_responses(args.data, catalog)
    res, _ = reports.itemstats_stage(matrix, catalog)
    return [res]


def cmd_cfa(args):
    model = resolve_model(args.model)
    if args.covariance:
        S = np.loadtxt(args.covariance, delimiter=",", ndmin=2)
        if args.n is None:
            raise ValueError("--covariance needs --n")
        name = f"sample covariance matrix from {args.covariance}"
        fit = fit_cfa(S, args.n, model, name=name)
        idx = fit_indices(fit, baseline_independence_fit(S, args.n), S)
        return [reports.cfa_result(fit, idx)]
    catalog = resolve_catalog(args.codebook)
    matrix = read_responses(args.data, catalog)
    res, _ = reports.cfa_stage(matrix, model)
    return [res]


def cmd_reliability(args):
    catalog = resolve_catalog(args.codebook)
    matrix = read_responses(args.data, catalog)
    _, fit = reports.cfa_stage(matrix, resolve_model(args.model))
    return [reports.reliability_stage(matrix, fit, catalog)]


def _externals_for(matrix, path):
    if not path:
        return {}
    ids, measures = load_externals(path)
    return reports.aligned_externals(matrix, ids, measures)


def cmd_validity(args):
    catalog = resolve_catalog(args.codebook)
    matrix = read_responses(args.data, catalog)
    externals = _externals_for(matrix, args.externals)
    res = reports.validity_assoc_stage(
        matrix, resolve_model(args.model), externals, load_roles(args.roles), reliance_codes(args.decisions)
    )
    return [res]


def cmd_shortform(args):
    catalog = resolve_catalog(args.codebook)
    matrix = read_responses(args.data, catalog)
    _, rows = reports.itemstats_stage(matrix, catalog)
    _, fit = reports.cfa_stage(matrix, resolve_model(args.model))
    externals = _externals_for(matrix, args.externals)
    return reports.shortform_stage(
        matrix, catalog, rows, fit, externals, load_roles(args.roles), reliance_codes(args.decisions)
    )


def _population(args) -> PopulationModel:
    if args.population:
        return PopulationModel.from_json(args.population)
    return load_preset(args.preset)


def cmd_simulate(args):
    model = _population(args)
    seed = reports.derive_seed(args.seed, "simulate")
    study = simulate_responses(model, args.n, seed)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "responses.csv").write_text(write_responses(study.responses), encoding="utf-8")
        (out / "externals.csv").write_text(
            write_externals(study.responses.respondent_ids, study.externals), encoding="utf-8"
        )
        (out / "decisions.csv").write_text(write_decisions(study.decisions), encoding="utf-8")
        print(out)
    else:
        sys.stdout.write(write_responses(study.responses))
    return None


def cmd_generate(args):
    provider = _provider(args.provider, args.provider_config, args.seed)
    res, _ = reports.generate_stage(ConstructSpec.taigha(), args.n, provider)
    return [res]


def _provider(kind, config_path, seed):
    cfg = None
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            cfg = ProviderConfig.from_dict(json.load(fh))
    return make_provider(kind, cfg, reports.derive_seed(seed, "generate") if kind == "mock" else seed)


def _ega_config(ref, seed, stage="reduce") -> EgaConfig:
    data = {}
    if ref:
        with open(ref, encoding="utf-8") as fh:
            data = json.load(fh)
    data.setdefault("seed", reports.derive_seed(seed, stage))
    return EgaConfig.from_dict(data)


def cmd_reduce(args):
    config = _ega_config(args.config, args.seed)
    if args.data:
        catalog = resolve_catalog(args.codebook)
        matrix = read_responses(args.data, catalog)
        theory = {i: catalog.get(i).construct for i in matrix.item_ids}
        return [reports.reduce_stage(list(matrix.item_ids), theory, config, data=matrix.as_float())]
    provider = _provider(args.provider, args.provider_config, args.seed)
    _, items = reports.generate_stage(ConstructSpec.taigha(), args.n, provider)
    ids = [f"g{k + 1:02d}" for k in range(len(items))]
    E = reports.embed_generated(items, provider)
    return [reports.reduce_stage(ids, {i: g.construct for i, g in zip(ids, items)}, config, embeddings=E)]


# ------------------------------------------------------------- pipeline

STAGE_ORDER = (
    "generate", "reduce", "content", "face", "simulate",
    "item-stats", "cfa", "reliability", "validity", "shortform",
)


def run_pipeline(config: dict, out: str | None = None) -> reports.Bundle:
    """Run the configured stages in dependency order and return the bundle.

    Respondent-level stages read ``data.responses`` (plus optional
    externals and decisions); without it the ``simulate`` block provides
    synthetic respondents.
    """
    seed = int(config.get("seed", 0))
    wanted = config.get("stages") or [s for s in STAGE_ORDER if s in config or s in _DEFAULT_ON]
    unknown = set(wanted) - set(STAGE_ORDER)
    if unknown:
        raise StageError("config", ValueError(f"unknown stages {sorted(unknown)}"))
    wanted = [s for s in STAGE_ORDER if s in wanted]
    bundle = reports.Bundle()
    catalog = run("config", resolve_catalog, config.get("codebook"))
    model = run("config", resolve_model, config.get("model", "taigha"))
    state: dict = {}

    if "generate" in wanted or "reduce" in wanted:
        g = config.get("generate", {})
        provider = run("generate", _provider, g.get("provider", "mock"), g.get("provider_config"), seed)
        res, items = run("generate", reports.generate_stage, ConstructSpec.taigha(), int(g.get("n", 60)), provider)
        if "generate" in wanted:
            bundle.add(res)
        if "reduce" in wanted:
            rc = dict(config.get("reduce", {}))
            rc.setdefault("seed", reports.derive_seed(seed, "reduce"))
            ids = [f"g{k + 1:02d}" for k in range(len(items))]
            E = run("reduce", reports.embed_generated, items, provider)
            bundle.add(run(
                "reduce", reports.reduce_stage, ids, {i: it.construct for i, it in zip(ids, items)},
                EgaConfig.from_dict(rc), embeddings=E,
            ))

    for stage, kind, fixture in (("content", "content_relevance", "table2"), ("face", "face_clarity", "table3")):
        if stage in wanted:
            c = config.get(stage, {})
            panel = run(stage, panel_from, c.get("ratings"), fixture, kind)
            bundle.add(run(
                stage, reports.validity_stage, panel, float(c.get("cutoff", 0.8)),
                normalise_policy(c.get("policy", "conservative_leq")), tuple(c.get("scale_targets", (0.8, 0.8))),
            ))

    needs_data = any(s in wanted for s in ("item-stats", "cfa", "reliability", "validity", "shortform"))
    if needs_data or "simulate" in wanted:
        data = config.get("data", {})
        if data.get("responses"):
            matrix = run("data", load_responses, data["responses"], catalog)
            externals = run("data", _externals_for, matrix, data.get("externals"))
            reliance = run("data", reliance_codes, data.get("decisions"))
        else:
            sim = config.get("simulate", {})
            pop = run("simulate", lambda: PopulationModel.from_json(sim["population"]) if sim.get("population")
                      else load_preset(sim.get("preset", "figure1_full")))
            study = run("simulate", simulate_responses, pop, int(sim.get("n", 385)), reports.derive_seed(seed, "simulate"))
            matrix = study.responses
            externals = study.externals
            reliance = assoc.code_reliance(study.decisions)[1]
            bundle.add(reports.StageResult(
                "simulate",
                {
                    "population": pop.to_dict(),
                    "n": matrix.n_respondents,
                    "sub_seed": reports.derive_seed(seed, "simulate"),
                    "n_reliance_included": len(reliance),
                },
                {
                    "simulated_responses": write_responses(matrix),
                    "simulated_externals": write_externals(matrix.respondent_ids, externals),
                    "simulated_decisions": write_decisions(study.decisions),
                },
                f"## Simulated respondents\n\n{matrix.n_respondents} respondents from population "
                f"'{pop.name or 'custom'}'.\n",
            ))
        state.update(matrix=matrix, externals=externals, reliance=reliance)

    if not needs_data:
        return _finish(bundle, out, config, seed)
    matrix = state["matrix"]
    roles = load_roles(config.get("roles")) if isinstance(config.get("roles"), str) or config.get("roles") is None \
        else dict(config["roles"])
    rows = None
    if "item-stats" in wanted or "shortform" in wanted:
        res, rows = run("item-stats", reports.itemstats_stage, matrix, catalog, model.items)
        if "item-stats" in wanted:
            bundle.add(res)
    fit = None
    if any(s in wanted for s in ("cfa", "reliability", "shortform")):
        res, fit = run("cfa", reports.cfa_stage, matrix, model)
        if "cfa" in wanted:
            bundle.add(res)
    if "reliability" in wanted:
        bundle.add(run("reliability", reports.reliability_stage, matrix, fit, catalog))
    if "validity" in wanted:
        bundle.add(run(
            "validity", reports.validity_assoc_stage, matrix, model, state["externals"], roles, state["reliance"]
        ))
    if "shortform" in wanted:
        for r in run(
            "shortform", reports.shortform_stage, matrix, catalog, rows, fit, state["externals"], roles, state["reliance"]
        ):
            bundle.add(r)
    return _finish(bundle, out, config, seed)


_DEFAULT_ON = ("item-stats", "cfa", "reliability", "validity", "shortform")


def _finish(bundle, out, config, seed):
    if out:
        bundle.write(out, _meta(config, seed))
    return bundle


def cmd_pipeline(args):
    with open(args.config, encoding="utf-8") as fh:
        config = json.load(fh)
    if args.seed_given:
        config["seed"] = args.seed
    out = args.out or config.get("output")
    if not out:
        raise StageError("config", ValueError("pipeline needs --out or an 'output' entry"))
    run_pipeline(config, out)
    print(out)
    return None


# ------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="taigha", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="run seed; stages derive sub-seeds from it (default 0)")
    # the seed may also follow the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="run seed (default 0)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    def data_args(sp, model=True):
        sp.add_argument("--data", default="-", help="response CSV, '-' for stdin (default)")
        sp.add_argument("--codebook", default=None, help="item catalog JSON (default: bundled TAIGHA)")
        if model:
            sp.add_argument("--model", default="taigha", help="CFA model JSON or bundled name (taigha, taigha_s)")
        sp.add_argument("--out", default=None, help="write a report bundle to this directory")

    for name, kind in (("validate-content", "content_relevance"), ("validate-face", "face_clarity")):
        sp = add(name, help=f"{kind.replace('_', ' ')} indices and pruning")
        sp.add_argument("--ratings", default=None, help="judge x item CSV (default: bundled published counts)")
        sp.add_argument("--cutoff", type=float, default=0.8)
        sp.add_argument("--policy", default="conservative-leq", choices=["conservative-leq", "strict-below",
                                                                         "conservative_leq", "strict_below"])
        sp.add_argument("--scale-targets", type=float, nargs=2, default=(0.8, 0.8), metavar=("AVE", "UA"))
        sp.add_argument("--out", default=None)
        sp.set_defaults(func=lambda a, k=kind: cmd_validate(a, k))

    sp = add("item-stats", help="descriptives, difficulty and corrected item-total correlations")
    data_args(sp, model=False)
    sp.set_defaults(func=cmd_item_stats)

    sp = add("cfa", help="maximum-likelihood CFA and fit indices")
    data_args(sp)
    sp.add_argument("--covariance", default=None, help="CSV covariance matrix in model item order")
    sp.add_argument("--n", type=int, default=None, help="sample size for --covariance")
    sp.set_defaults(func=cmd_cfa)

    sp = add("reliability", help="Cronbach's alpha and McDonald's omega")
    data_args(sp)
    sp.set_defaults(func=cmd_reliability)

    for name, func in (("validity", cmd_validity), ("shortform", cmd_shortform)):
        sp = add(name, help="convergent/divergent/criterion validity" if name == "validity"
                            else "short-form selection and validation")
        data_args(sp)
        sp.add_argument("--externals", default=None, help="CSV: respondent_id plus one column per measure")
        sp.add_argument("--decisions", default=None, help="CSV of initial/advice/final choices")
        sp.add_argument("--roles", default=None, help="JSON map measure -> convergent/divergent/criterion")
        sp.set_defaults(func=func)

    sp = add("simulate", help="synthetic respondents; response CSV to stdout")
    sp.add_argument("--preset", default="figure1_full", choices=PRESETS)
    sp.add_argument("--population", default=None, help="population model JSON (overrides --preset)")
    sp.add_argument("--n", type=int, default=385)
    sp.add_argument("--out", default=None, help="directory for responses/externals/decisions CSVs")
    sp.set_defaults(func=cmd_simulate)

    for name, func in (("generate", cmd_generate), ("reduce", cmd_reduce)):
        sp = add(name, help="candidate item generation" if name == "generate"
                            else "network-based item reduction")
        sp.add_argument("--provider", default="mock", choices=["mock", "http"])
        sp.add_argument("--provider-config", default=None, help="provider JSON (endpoint, model, credential_env, ...)")
        sp.add_argument("--n", type=int, default=60)
        sp.add_argument("--out", default=None)
        if name == "reduce":
            sp.add_argument("--config", default=None, help="EGA config JSON")
            sp.add_argument("--data", default=None, help="reduce respondent data instead of generated items")
            sp.add_argument("--codebook", default=None)
        sp.set_defaults(func=func)

    sp = add("pipeline", help="run the configured stages and write a report bundle")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    stage = args.command
    try:
        results = run(stage, args.func, args)
        if results is not None:
            emit(results, args.out, _meta(sys.argv[1:] if argv is None else list(argv), args.seed))
    except StageError as exc:
        print(f"taigha: error {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
