"""Internal consistency: Cronbach's alpha and McDonald's omega."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .cfa import CfaFit
from .dataset import ResponseMatrix, complete_cases

ACCEPTABLE = 0.75


class ReliabilityError(ValueError):
    pass


def alpha_from_cov(S: np.ndarray) -> float:
    S = np.asarray(S, dtype=float)
    k = S.shape[0]
    if k < 2:
        raise ReliabilityError("alpha needs at least 2 items")
    total = S.sum()
    if total <= 0:
        raise ReliabilityError("zero total-score variance")
    return k / (k - 1) * (1.0 - np.trace(S) / total)


def cronbach_alpha(matrix: ResponseMatrix, item_set: Sequence[str]) -> float:
    """Alpha on listwise-complete rows; reverse-score mixed-key sets first."""
    item_set = list(item_set)
    if len(item_set) < 2:
        raise ReliabilityError("alpha needs at least 2 items")
    x = complete_cases(matrix, item_set).as_float(item_set)
    return float(alpha_from_cov(np.cov(x, rowvar=False, ddof=1)))


def mcdonald_omega(
    fit: CfaFit, item_set: Sequence[str], keys: Mapping[str, float] | None = None
) -> float:
    """Omega total from a fitted CFA.

    ``keys`` maps items to +1/-1 so that reverse-keyed items enter the
    composite with flipped sign; this aligns trust and distrust items when
    they are summed into one total.
    """
    if not fit.converged:
        raise ReliabilityError("omega needs a converged fit")
    item_set = list(item_set)
    if len(item_set) < 2:
        raise ReliabilityError("omega needs at least 2 items")
    idx = [fit.model.items.index(i) for i in item_set]
    w = np.array([1.0 if keys is None else float(keys.get(i, 1.0)) for i in item_set])
    L = fit.loading_matrix()[idx]
    common = w @ L @ fit.factor_correlations @ L.T @ w
    total = w @ fit.implied[np.ix_(idx, idx)] @ w
    return float(common / total)


def reliability_block(
    matrix: ResponseMatrix,
    fit: CfaFit,
    subscales: Mapping[str, Sequence[str]],
    reverse_keyed: Sequence[str] = (),
) -> dict:
    """Alpha and omega for each subscale and the reverse-keyed full scale.

    Alpha uses the listwise sample of the CFA items so both coefficients
    describe one sample.
    """
    items = list(fit.model.items)
    sample = complete_cases(matrix, items).select(items)
    data = sample.as_float()
    out = {}
    for name, members in subscales.items():
        idx = [items.index(i) for i in members]
        a = float(alpha_from_cov(np.cov(data[:, idx], rowvar=False, ddof=1)))
        w = mcdonald_omega(fit, members)
        out[name] = {"alpha": a, "omega": w, "acceptable": bool(min(a, w) > ACCEPTABLE)}
    keys = {i: (-1.0 if i in reverse_keyed else 1.0) for i in items}
    signed = data * np.array([keys[i] for i in items])
    a = float(alpha_from_cov(np.cov(signed, rowvar=False, ddof=1)))
    w = mcdonald_omega(fit, items, keys)
    out["full"] = {"alpha": a, "omega": w, "acceptable": bool(min(a, w) > ACCEPTABLE)}
    return out
