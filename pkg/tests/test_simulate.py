import numpy as np
import pytest

from taigha.simulate import (
    ModelError,
    PopulationModel,
    calibrate_loading,
    category_scores,
    load_preset,
    ordinal_correlation,
    population_covariance,
    simulate_responses,
    thresholds_from_proportions,
)

TAU = (-1.5, -0.5, 0.5, 1.5)


def _model(loadings, factors, phi=None, **kw):
    items, pattern = [], {}
    for f, members in factors.items():
        for i in members:
            items.append(i)
            pattern[i] = f
    m = len(factors)
    return PopulationModel(
        tuple(items), tuple(factors), pattern, loadings,
        np.eye(m) if phi is None else phi, {i: TAU for i in items}, **kw,
    )


def test_population_covariance_examples():
    one = _model({"a": 0.8}, {"f": ["a"]})
    assert population_covariance(one) == pytest.approx(np.array([[1.0]]))
    same = _model({"a": 0.8, "b": 0.9}, {"f": ["a", "b"]})
    assert population_covariance(same)[0, 1] == pytest.approx(0.72)
    phi = np.array([[1, -0.84], [-0.84, 1]])
    split = _model({"a": 0.8, "b": 0.9}, {"f": ["a"], "g": ["b"]}, phi)
    assert population_covariance(split)[0, 1] == pytest.approx(-0.6048)


def test_invalid_models():
    with pytest.raises(ModelError):
        _model({"a": 0.8, "b": 0.9}, {"f": ["a"], "g": ["b"]}, np.array([[1, 1.2], [1.2, 1]]))
    with pytest.raises(ModelError):
        PopulationModel(("a",), ("f",), {"a": "f"}, {"a": 0.5}, np.eye(1), {"a": (0.5, -0.5)})


def test_same_seed_identical(preset):
    a = simulate_responses(preset, 50, 9)
    b = simulate_responses(preset, 50, 9)
    assert a.responses.equals(b.responses)
    assert a.decisions == b.decisions
    assert not a.responses.equals(simulate_responses(preset, 50, 10).responses)


def test_zero_loadings_independent():
    items = {"f": [f"i{k}" for k in range(5)]}
    m = _model({i: 0.0 for i in items["f"]}, items)
    X = simulate_responses(m, 10_000, 1).responses.as_float()
    R = np.corrcoef(X, rowvar=False)
    assert np.max(np.abs(R[np.triu_indices(5, 1)])) < 0.05


def test_quadrature_oracle(preset):
    X = simulate_responses(preset, 100_000, 2).responses.as_float()
    R = np.corrcoef(X, rowvar=False)
    np.testing.assert_allclose(R, ordinal_correlation(preset), atol=0.02)


def test_factor_correlation_converges(preset):
    f = simulate_responses(preset, 100_000, 3).factor_scores
    assert np.corrcoef(f.T)[0, 1] == pytest.approx(-0.84, abs=0.02)


def test_bounds_and_missingness(preset):
    m = simulate_responses(preset, 2000, 4).responses
    assert not m.missing_mask.any()
    assert m.values.min() >= 1 and m.values.max() <= 5
    data = preset.to_dict()
    data["missing_rate"] = 0.003
    data["loadings"] = dict(preset.loadings)
    miss = simulate_responses(PopulationModel.from_dict(data), 20_000, 4).responses
    assert miss.missing_mask.mean() == pytest.approx(0.003, abs=0.001)


def test_discretisation_monotone(preset):
    s = simulate_responses(preset, 5000, 5)
    for k in range(preset.p):
        order = np.argsort(s.latent[:, k])
        assert np.all(np.diff(s.responses.values[order, k]) >= 0)


def test_thresholds_reproduce_proportions():
    props = [0.1, 0.2, 0.4, 0.2, 0.1]
    t = thresholds_from_proportions(props)
    from scipy.stats import norm

    np.testing.assert_allclose(np.diff(np.concatenate([[0], norm.cdf(t), [1]])), props)
    mean, sd, _ = category_scores(t)
    assert mean == pytest.approx(3.0)


def test_calibrated_loadings_hit_targets(preset):
    R = ordinal_correlation(preset)
    L = np.array([preset.truth_loadings()[i] for i in preset.items])
    same = np.array([[preset.pattern[a] == preset.pattern[b] for b in preset.items] for a in preset.items])
    off = same & ~np.eye(preset.p, dtype=bool)
    # first-order calibration; skewed distrust items overshoot by up to ~0.05
    np.testing.assert_allclose(R[off], np.outer(L, L)[off], atol=0.06)
    assert np.mean(np.abs(R[off] - np.outer(L, L)[off])) < 0.03
    with pytest.raises(ModelError):
        calibrate_loading(0.999, (-3.0, -2.9, 2.9, 3.0))


def test_presets_bundled():
    short = load_preset("figure2_short")
    assert short.p == 4
    with pytest.raises(ModelError):
        load_preset("nope")
