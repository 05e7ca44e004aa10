import numpy as np
import pytest

from taigha.cfa import CfaModel, covariance_matrix, fit_cfa
from taigha.dataset import ResponseMatrix, apply_reverse_scoring
from taigha.instrument import model_spec
from taigha.reliability import (
    ReliabilityError,
    alpha_from_cov,
    cronbach_alpha,
    mcdonald_omega,
    reliability_block,
)
from taigha.simulate import simulate_responses

ONE = CfaModel.from_factor_lists({"f": ["a", "b", "c", "d", "e"]})


def _m(X):
    return ResponseMatrix(X, np.zeros(X.shape, bool), tuple(f"i{k}" for k in range(X.shape[1])))


def test_alpha_examples():
    assert alpha_from_cov(np.eye(2)) == 0.0
    assert alpha_from_cov(np.ones((2, 2))) == pytest.approx(1.0)
    C = np.full((5, 5), 0.7225)
    np.fill_diagonal(C, 1.0)
    assert alpha_from_cov(C) == pytest.approx(1.25 * (1 - 5 / 19.45))
    assert round(alpha_from_cov(C), 3) == 0.929


def test_alpha_errors():
    with pytest.raises(ReliabilityError):
        alpha_from_cov(np.eye(1))
    with pytest.raises(ReliabilityError):
        alpha_from_cov(np.zeros((3, 3)))


def test_alpha_from_matrix_is_shift_and_order_invariant(rng):
    X = rng.integers(1, 6, size=(200, 4)) + rng.integers(0, 2, size=(200, 1))
    a = cronbach_alpha(_m(X), ["i0", "i1", "i2", "i3"])
    Y = X + np.array([0, 3, -1, 2])
    assert cronbach_alpha(_m(Y), ["i3", "i1", "i0", "i2"]) == pytest.approx(a, abs=1e-12)


def _congeneric(lams):
    lams = np.asarray(lams)
    S = np.outer(lams, lams)
    np.fill_diagonal(S, 1.0)
    return fit_cfa(S, 500, ONE), S


def test_omega_parallel_items_equals_alpha():
    fit, S = _congeneric([0.85] * 5)
    w = mcdonald_omega(fit, ONE.items)
    assert w == pytest.approx(18.0625 / 19.45, abs=1e-9)
    assert w == pytest.approx(alpha_from_cov(S), abs=1e-9)


def test_omega_single_item_errors():
    fit, _ = _congeneric([0.85] * 5)
    with pytest.raises(ReliabilityError):
        mcdonald_omega(fit, ["a"])


def test_alpha_below_omega_for_congeneric():
    fit, S = _congeneric([0.9, 0.8, 0.6, 0.5, 0.4])
    assert alpha_from_cov(S) <= mcdonald_omega(fit, ONE.items)


def test_alpha_below_omega_on_samples(rng):
    lams = np.array([0.9, 0.75, 0.6, 0.5, 0.35])
    ok = 0
    for _ in range(20):
        f = rng.standard_normal(400)
        X = f[:, None] * lams + rng.standard_normal((400, 5)) * np.sqrt(1 - lams**2)
        S = np.cov(X, rowvar=False)
        ok += alpha_from_cov(S) <= mcdonald_omega(fit_cfa(S, 400, ONE), ONE.items) + 1e-9
    assert ok >= 19


def test_full_scale_omega_bracket(preset, catalog):
    model = CfaModel.from_factor_lists(model_spec())
    rev = [i for i in model.items if catalog.get(i).reverse_keyed]
    seeds = range(30)
    inside = 0
    for s in seeds:
        m = simulate_responses(preset, 385, 100 + s).responses
        S, n = covariance_matrix(m, model.items)
        block = reliability_block(m, fit_cfa(S, n, model), model.factor_lists(), rev)
        inside += 0.93 <= block["full"]["omega"] <= 0.98
    assert inside >= 0.95 * len(seeds)


def test_block_alpha_matches_reverse_scored_alpha(study, catalog):
    model = CfaModel.from_factor_lists(model_spec())
    S, n = covariance_matrix(study.responses, model.items)
    rev = [i for i in model.items if catalog.get(i).reverse_keyed]
    block = reliability_block(study.responses, fit_cfa(S, n, model), model.factor_lists(), rev)
    flipped = apply_reverse_scoring(study.responses, catalog)
    assert block["full"]["alpha"] == pytest.approx(cronbach_alpha(flipped, model.items), abs=1e-12)
    assert block["trust"]["acceptable"] and block["distrust"]["acceptable"]
