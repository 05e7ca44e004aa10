import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from taigha.cfa import (
    CfaError,
    CfaModel,
    NotPositiveDefiniteError,
    baseline_independence_fit,
    covariance_matrix,
    discrepancy,
    discrepancy_and_gradient,
    fit_cfa,
    fit_from_responses,
    fit_indices,
    pack,
    unpack,
)
from taigha.dataset import ResponseMatrix
from taigha.instrument import model_spec

TWO = CfaModel.from_factor_lists({"f1": ["a", "b", "c"], "f2": ["d", "e", "g"]})


def _population(model, L, phi, theta):
    return L @ phi @ L.T + np.diag(theta)


def _loadings(model, values):
    L = np.zeros((model.p, model.m))
    L[model.loading_mask()] = values
    return L


def test_model_identification_rules():
    with pytest.raises(CfaError):
        CfaModel.from_factor_lists({"f": ["a", "b"]})
    with pytest.raises(CfaError):
        CfaModel.from_factor_lists({"f": ["a", "b"], "g": ["a", "c"]})
    short = CfaModel.from_factor_lists({"t": ["t4", "t5"], "d": ["d2", "d4"]})
    assert short.df == 1


def test_covariance_fixture():
    m = ResponseMatrix(np.array([[1, 2], [2, 4], [3, 6], [4, 8]]), np.zeros((4, 2), bool), ("x", "y"))
    S, n = covariance_matrix(m, ["x", "y"])
    assert n == 4
    np.testing.assert_allclose(S, [[5 / 3, 10 / 3], [10 / 3, 20 / 3]])
    assert np.array_equal(S, S.T)


def test_covariance_errors():
    m = ResponseMatrix(np.array([[1, 2], [1, 3], [1, 4]]), np.zeros((3, 2), bool), ("x", "y"))
    with pytest.raises(CfaError, match="zero-variance"):
        covariance_matrix(m, ["x", "y"])
    with pytest.raises(CfaError, match="too few"):
        covariance_matrix(m.rows([0, 1]), ["x", "y"])


def test_three_indicator_closed_form():
    S = np.array([[1, 0.48, 0.42], [0.48, 1, 0.56], [0.42, 0.56, 1]])
    model = CfaModel.from_factor_lists({"f": ["x1", "x2", "x3"]})
    fit = fit_cfa(S, 200, model)
    s12, s13, s23 = 0.48, 0.42, 0.56
    closed = [np.sqrt(s12 * s13 / s23), np.sqrt(s12 * s23 / s13), np.sqrt(s13 * s23 / s12)]
    np.testing.assert_allclose([fit.loadings[i] for i in model.items], closed, atol=1e-5)
    np.testing.assert_allclose(closed, [0.6, 0.8, 0.7])
    assert fit.df == 0 and fit.discrepancy < 1e-10


def test_population_recovery():
    L = _loadings(TWO, [0.8, 0.7, 0.9, 0.6, 0.85, 0.75])
    phi = np.array([[1, -0.5], [-0.5, 1]])
    theta = 1 - (L**2).sum(axis=1) + np.array([0.1, 0.0, 0.2, 0.05, 0.0, 0.3])
    fit = fit_cfa(_population(TWO, L, phi, theta), 500, TWO)
    assert fit.converged and fit.discrepancy < 1e-10
    np.testing.assert_allclose([fit.loadings[i] for i in TWO.items], L.sum(axis=1), atol=1e-5)
    assert fit.phi("f1", "f2") == pytest.approx(-0.5, abs=1e-5)
    np.testing.assert_allclose([fit.unique_variances[i] for i in TWO.items], theta, atol=1e-5)
    assert fit.chi_square == (fit.n_used - 1) * fit.discrepancy


def _random_point(rng, model):
    L = _loadings(model, rng.uniform(0.3, 1.2, model.p) * rng.choice([-1, 1], model.p))
    A = rng.standard_normal((model.m, model.m + 2))
    C = A @ A.T
    d = 1 / np.sqrt(np.diag(C))
    phi = C * np.outer(d, d)
    return pack(L, phi, rng.uniform(0.2, 1.0, model.p), model)


def test_gradient_matches_finite_differences(rng):
    model = CfaModel.from_factor_lists({"f1": ["a", "b", "c"], "f2": ["d", "e"], "f3": ["g", "h"]})
    B = rng.standard_normal((model.p, model.p + 5))
    S = B @ B.T / (model.p + 5)
    for _ in range(25):
        x = _random_point(rng, model)
        _, g = discrepancy_and_gradient(x, S, model)
        h = 1e-6
        fd = np.array(
            [(discrepancy(x + h * e, S, model) - discrepancy(x - h * e, S, model)) / (2 * h) for e in np.eye(x.size)]
        )
        assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.max(np.abs(fd)))


def test_pack_unpack_roundtrip(rng):
    x = _random_point(rng, TWO)
    L, phi, theta = unpack(x, TWO)
    np.testing.assert_allclose(pack(L, phi, theta, TWO), x, atol=1e-12)


def test_non_pd_input():
    S = np.array([[1, 0.9, 0.9], [0.9, 1, -0.9], [0.9, -0.9, 1]])
    with pytest.raises(NotPositiveDefiniteError, match="sample covariance matrix S"):
        fit_cfa(S, 100, CfaModel.from_factor_lists({"f": ["a", "b", "c"]}))


def test_heywood_floor_flagged():
    S = np.array([[1.0, 0.95, 0.3, 0.3], [0.95, 1.0, 0.3, 0.3], [0.3, 0.3, 1.0, 0.2], [0.3, 0.3, 0.2, 1.0]])
    S[0, 1] = S[1, 0] = 0.99
    model = CfaModel.from_factor_lists({"f": ["a", "b", "c", "d"]})
    fit = fit_cfa(S, 300, model)
    for i in model.items:
        assert fit.unique_variances[i] >= 1e-4 * 1.0 * (1 - 1e-9)
    assert np.linalg.eigvalsh(fit.implied).min() > 0


def test_baseline_examples():
    assert baseline_independence_fit(np.diag([1.0, 2.0, 3.0]), 50)[0] == pytest.approx(0.0, abs=1e-12)
    chi, df = baseline_independence_fit(np.array([[1, 0.6], [0.6, 1]]), 101)
    assert chi == pytest.approx(100 * -np.log(0.64)) and round(chi, 2) == 44.63 and df == 1
    assert baseline_independence_fit(np.eye(10), 50)[1] == 45


def _fit_at_truth():
    L = _loadings(TWO, [0.8, 0.7, 0.9, 0.6, 0.85, 0.75])
    phi = np.array([[1, 0.3], [0.3, 1]])
    S = _population(TWO, L, phi, 1 - (L**2).sum(axis=1))
    return S, fit_cfa(S, 385, TWO)


def test_saturated_indices():
    S, fit = _fit_at_truth()
    idx = fit_indices(fit, baseline_independence_fit(S, 385), S)
    assert idx.srmr == pytest.approx(0, abs=1e-6)
    assert idx.rmsea == pytest.approx(0, abs=1e-9)
    assert idx.cfi == pytest.approx(1) and idx.gfi == pytest.approx(1)
    assert idx.all_pass()


def test_index_formulas():
    S, fit = _fit_at_truth()
    fake = dataclasses.replace(fit, chi_square=100.0, df=34, n_used=385)
    idx = fit_indices(fake, (3000.0, 45), S)
    assert (round(idx.nfi, 3), round(idx.cfi, 3), round(idx.tli, 3), round(idx.rmsea, 3)) == (
        0.967,
        0.978,
        0.970,
        0.071,
    )


def test_df_zero_reports_not_applicable():
    S = np.array([[1, 0.48, 0.42], [0.48, 1, 0.56], [0.42, 0.56, 1]])
    fit = fit_cfa(S, 200, CfaModel.from_factor_lists({"f": ["x1", "x2", "x3"]}))
    idx = fit_indices(fit, baseline_independence_fit(S, 200), S)
    assert idx.rmsea is None and idx.tli is None
    assert idx.passes()["rmsea"] is None
    assert "n/a" in idx.to_markdown()


def test_permutation_and_scale_invariance(study):
    model = CfaModel.from_factor_lists(model_spec())
    S, n = covariance_matrix(study.responses, model.items)
    base = fit_cfa(S, n, model)
    base_idx = fit_indices(base, baseline_independence_fit(S, n), S)

    perm = np.random.default_rng(3).permutation(model.p)
    items = [model.items[k] for k in perm]
    pm = CfaModel(tuple(items), model.factors, model.pattern)
    Sp = S[np.ix_(perm, perm)]
    pf = fit_cfa(Sp, n, pm)
    np.testing.assert_allclose(pf.implied, base.implied[np.ix_(perm, perm)], atol=1e-6)

    D = np.ones(model.p)
    D[2] = 3.7
    Ss = S * np.outer(D, D)
    sf = fit_cfa(Ss, n, model)
    si = fit_indices(sf, baseline_independence_fit(Ss, n), Ss)
    for i in model.items:
        assert sf.std_loadings[i] == pytest.approx(base.std_loadings[i], abs=1e-6)
    for k in ("gfi", "cfi", "tli", "nfi", "rmsea", "srmr"):
        assert getattr(si, k) == pytest.approx(getattr(base_idx, k), abs=1e-6)


def test_fit_on_simulated_study(study):
    fit, idx = fit_from_responses(study.responses, CfaModel.from_factor_lists(model_spec()))
    assert fit.converged
    assert fit.phi("trust", "distrust") == pytest.approx(-0.84, abs=0.06)
    assert idx.all_pass()
    assert np.all(np.abs(fit.factor_correlations) <= 1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_discrepancy_nonnegative(seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((6, 12))
    S = B @ B.T / 12
    x = _random_point(rng, TWO)
    assert discrepancy(x, S, TWO) >= -1e-12
