import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from taigha.cfa import CfaModel
from taigha.instrument import model_spec, table4_stats
from taigha.shortform import ShortFormError, select_short_form, validate_short_form
from taigha.simulate import simulate_responses

LOADINGS = {
    "trust_1": 0.86, "trust_2": 0.80, "trust_3": 0.88, "trust_4": 0.89, "trust_5": 0.87,
    "distrust_1": 0.82, "distrust_2": 0.81, "distrust_3": 0.80, "distrust_4": 0.90, "distrust_5": 0.88,
}


def _itc():
    return {r["item"]: r["itc"] for r in table4_stats()}


def test_published_selection(catalog):
    sel = select_short_form(_itc(), catalog.facets(), LOADINGS)
    assert sorted(sel.items) == ["distrust_2", "distrust_4", "trust_4", "trust_5"]
    assert not sel.ambiguous
    rules = {d.selected: d.rule for d in sel.decisions}
    assert "loading" in rules["trust_4"]


def test_single_item_cell_skips_tiebreak():
    sel = select_short_form({"a": 0.5}, {"a": ("trust", "cognitive")}, {})
    assert sel.items == ["a"] and sel.decisions[0].rule == "highest item-total correlation"


def test_double_tie_flags_ambiguity():
    facets = {"a": ("trust", "cognitive"), "b": ("trust", "cognitive")}
    sel = select_short_form({"a": 0.8, "b": 0.8}, facets, {"a": 0.7, "b": 0.7})
    assert sel.items == ["a"] and sel.ambiguous


def test_errors():
    with pytest.raises(ShortFormError, match="no items"):
        select_short_form({"a": 0.8}, {"a": ("trust", "cognitive")}, {}, cells=[("distrust", "affective")])
    facets = {"a": ("trust", "cognitive"), "b": ("trust", "cognitive")}
    with pytest.raises(ShortFormError, match="loadings"):
        select_short_form({"a": 0.8, "b": 0.8}, facets, {})


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([np.tanh, np.exp, lambda v: 3 * v + 1, lambda v: v**3]))
def test_rank_invariance(catalog, fn):
    base = select_short_form(_itc(), catalog.facets(), LOADINGS).items
    moved = {k: float(fn(v)) for k, v in _itc().items()}
    assert select_short_form(moved, catalog.facets(), LOADINGS).items == base


@settings(max_examples=40, deadline=None)
@given(st.permutations(range(10)))
def test_order_invariance_without_double_ties(catalog, perm):
    facets = catalog.facets()
    keys = list(facets)
    shuffled = {keys[k]: facets[keys[k]] for k in perm}
    a = select_short_form(_itc(), facets, LOADINGS)
    b = select_short_form(_itc(), shuffled, LOADINGS)
    assert sorted(a.items) == sorted(b.items)


def test_full_selection_correlates_perfectly(study, catalog):
    full = CfaModel.from_factor_lists(model_spec())
    facets = {i: ("trust", "cognitive") if i.startswith("trust") else ("distrust", "cognitive") for i in full.items}
    sel = select_short_form({i: 0.5 for i in full.items}, facets, {i: 0.5 for i in full.items}, per_facet=5)
    rep = validate_short_form(study.responses, sel, full)
    assert rep["short_vs_full"]["short_trust~full_trust"]["r"] == pytest.approx(1.0)


def _short_runs(preset, catalog, seeds):
    full = CfaModel.from_factor_lists(model_spec())
    sel = select_short_form(_itc(), catalog.facets(), LOADINGS)
    rev = [i for i in full.items if catalog.get(i).reverse_keyed]
    return [validate_short_form(simulate_responses(preset, 385, 500 + s).responses, sel, full, rev) for s in seeds]


@pytest.fixture(scope="module")
def short_runs(preset, catalog):
    return _short_runs(preset, catalog, range(40))


def test_short_form_correlation_and_cfi(short_runs):
    r_ok = sum(rep["short_vs_full"]["short_trust~full_trust"]["r"] >= 0.90 for rep in short_runs)
    cfi_ok = sum(rep["fit_indices"]["cfi"] > 0.95 for rep in short_runs)
    assert r_ok >= 0.95 * len(short_runs)
    assert cfi_ok >= 0.95 * len(short_runs)


def test_short_form_rmsea_usually_below_cutoff(short_runs):
    # df = 1: even an exact model gives RMSEA < 0.08 only when chi2_1 < 3.46 (p = 0.937)
    ok = sum(rep["fit_indices"]["rmsea"] < 0.08 for rep in short_runs)
    assert ok >= 0.80 * len(short_runs)


@pytest.mark.xfail(reason="chi-square(1) bound caps the rate near 0.94", strict=False)
def test_short_form_rmsea_in_95_percent(short_runs):
    ok = sum(rep["fit_indices"]["rmsea"] < 0.08 for rep in short_runs)
    assert ok >= 0.95 * len(short_runs)
