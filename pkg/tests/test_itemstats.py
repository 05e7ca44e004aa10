import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from taigha.dataset import ResponseMatrix
from taigha.instrument import table4_stats
from taigha.itemstats import (
    ItemStatsError,
    corrected_item_total,
    difficulty_from_mean,
    item_descriptives,
    item_statistics,
    moment_shape,
    table4_markdown,
)
from taigha.simulate import simulate_responses


def _m(cols, ids=None):
    X = np.column_stack(cols)
    ids = ids or tuple(f"i{k}" for k in range(X.shape[1]))
    return ResponseMatrix(X, np.zeros(X.shape, bool), ids)


def test_moments_of_one_to_five():
    g1, g2, deg = moment_shape(np.arange(1, 6))
    assert g1 == pytest.approx(0.0) and g2 == pytest.approx(-1.3) and not deg
    assert moment_shape(np.array([1, 1, 5, 5]))[0] == pytest.approx(0.0)


def test_constant_column_is_degenerate():
    row = item_descriptives(_m([np.full(6, 3), np.arange(6) % 5 + 1]))[0]
    assert row.degenerate and row.sd == 0 and row.skewness == 0 and row.excess_kurtosis == 0


def test_too_few_observations():
    m = ResponseMatrix(np.array([[1], [2]]), np.array([[False], [True]]), ("i0",))
    with pytest.raises(ItemStatsError):
        item_descriptives(m)


def test_difficulty_examples():
    assert round(difficulty_from_mean(3.78, 5), 2) == 0.76
    assert round(difficulty_from_mean(1.96, 5), 2) == 0.39
    assert difficulty_from_mean(5.0, 5) == 1.0


def test_table4_difficulty_column():
    # every published row except distrust_1 (2.32/5 = 0.464) reproduces
    off = [r["item"] for r in table4_stats() if round(r["mean"] / 5, 2) != r["difficulty"]]
    assert off == ["distrust_1"]


def test_itc_identical_columns():
    x = np.array([1, 2, 3, 4, 5, 2])
    itc = corrected_item_total(_m([x, x]), {"i0": "s", "i1": "s"})
    assert itc == {"i0": pytest.approx(1.0), "i1": pytest.approx(1.0)}


def test_itc_brute_force_six_by_three():
    X = np.array([[1, 2, 2], [2, 2, 3], [3, 4, 3], [4, 3, 5], [5, 5, 4], [2, 1, 1]])
    itc = corrected_item_total(_m(list(X.T)), {"i0": "s", "i1": "s", "i2": "s"})
    for k in range(3):
        rest = X.sum(axis=1) - X[:, k]
        x = X[:, k]
        n = len(x)
        num = n * np.sum(x * rest) - x.sum() * rest.sum()
        den = np.sqrt((n * np.sum(x * x) - x.sum() ** 2) * (n * np.sum(rest * rest) - rest.sum() ** 2))
        assert itc[f"i{k}"] == pytest.approx(num / den, abs=1e-12)


def test_itc_near_zero_for_independent_item(rng):
    f = rng.standard_normal(20000)
    a = np.digitize(f + 0.5 * rng.standard_normal(20000), [-1, 0, 1]) + 1
    b = np.digitize(f + 0.5 * rng.standard_normal(20000), [-1, 0, 1]) + 1
    c = rng.integers(1, 6, 20000)
    itc = corrected_item_total(_m([a, b, c]), {"i0": "s", "i1": "s", "i2": "s"})
    assert abs(itc["i2"]) < 0.03


def test_itc_zero_variance_errors():
    with pytest.raises(ItemStatsError):
        corrected_item_total(_m([np.full(5, 2), np.arange(5)]), {"i0": "s", "i1": "s"})


def test_itc_bracket_on_simulated_data(preset, catalog):
    inside = 0
    seeds = range(40)
    for s in seeds:
        itc = corrected_item_total(simulate_responses(preset, 385, s).responses, catalog.subscales())
        inside += all(0.70 <= v <= 0.92 for v in itc.values())
    assert inside >= 0.95 * len(seeds)


def test_table4_layout(study, catalog):
    rows = item_statistics(study.responses, catalog)
    md = table4_markdown(rows)
    assert md.splitlines()[0].startswith("| Item | Missing data (%)")
    for r in rows:
        assert r.min_observed <= r.median <= r.max_observed
        assert 0.2 <= r.difficulty <= 1.0


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5)), min_size=5, max_size=40),
    st.integers(0, 2),
    st.integers(-3, 3),
)
def test_itc_shift_invariant(rows, col, shift):
    X = np.array(rows)
    if np.any(X.std(axis=0) == 0) or any(np.ptp(X.sum(axis=1) - X[:, k]) == 0 for k in range(3)):
        return
    g = {"i0": "s", "i1": "s", "i2": "s"}
    base = corrected_item_total(_m(list(X.T)), g)
    Y = X.copy()
    Y[:, col] += shift
    moved = corrected_item_total(_m(list(Y.T)), g)
    for k in g:
        assert moved[k] == pytest.approx(base[k], abs=1e-9)
