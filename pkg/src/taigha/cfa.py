"""Maximum-likelihood confirmatory factor analysis for simple-structure models.

Identification fixes every factor variance to 1, so all loadings are free
and the factor covariance matrix is a correlation matrix. The factor
correlations are parameterised through a unit-row Cholesky factor,

    Phi = C C^T,   C[i] = v[i] / ||v[i]||,   v lower triangular, v[i, i] = 1,

which keeps Phi positive definite with unit diagonal for any real ``v``.
Unique variances are box-constrained from below (Heywood floor).
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .dataset import ResponseMatrix, complete_cases

HEYWOOD_FLOOR = 1e-4
GRAD_TOL = 1e-6
FTOL = 1e-9
MAX_ITER = 10_000

CUTOFFS = {
    "gfi": (">", 0.90),
    "cfi": (">", 0.90),
    "tli": (">", 0.90),
    "nfi": (">", 0.90),
    "rmsea": ("<", 0.08),
    "srmr": ("<", 0.08),
}


class CfaError(ValueError):
    pass


class NotPositiveDefiniteError(CfaError):
    pass


@dataclass(frozen=True)
class CfaModel:
    items: tuple[str, ...]
    factors: tuple[str, ...]
    pattern: Mapping[str, str]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "pattern", dict(self.pattern))
        if set(self.pattern) != set(self.items):
            raise CfaError("every item must load on exactly one factor")
        unknown = set(self.pattern.values()) - set(self.factors)
        if unknown:
            raise CfaError(f"pattern names unknown factors {sorted(unknown)}")
        need = 3 if len(self.factors) == 1 else 2
        for f in self.factors:
            k = sum(1 for v in self.pattern.values() if v == f)
            if k < need:
                raise CfaError(f"factor {f!r} has {k} indicators; at least {need} required")

    @classmethod
    def from_factor_lists(cls, factors: Mapping[str, Sequence[str]]) -> "CfaModel":
        items, pattern = [], {}
        for f, members in factors.items():
            for i in members:
                if i in pattern:
                    raise CfaError(f"item {i!r} assigned to more than one factor")
                pattern[i] = f
                items.append(i)
        return cls(tuple(items), tuple(factors), pattern)

    @classmethod
    def from_json(cls, path) -> "CfaModel":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls.from_factor_lists(data.get("factors", data))

    def factor_lists(self) -> dict[str, list[str]]:
        return {f: [i for i in self.items if self.pattern[i] == f] for f in self.factors}

    @property
    def p(self) -> int:
        return len(self.items)

    @property
    def m(self) -> int:
        return len(self.factors)

    @property
    def n_free(self) -> int:
        return 2 * self.p + self.m * (self.m - 1) // 2

    @property
    def df(self) -> int:
        return self.p * (self.p + 1) // 2 - self.n_free

    def loading_mask(self) -> np.ndarray:
        mask = np.zeros((self.p, self.m), dtype=bool)
        for r, item in enumerate(self.items):
            mask[r, self.factors.index(self.pattern[item])] = True
        return mask


@dataclass
class CfaFit:
    model: CfaModel
    loadings: dict[str, float]
    std_loadings: dict[str, float]
    factor_correlations: np.ndarray
    unique_variances: dict[str, float]
    discrepancy: float
    chi_square: float
    df: int
    n_used: int
    converged: bool
    iterations: int
    implied: np.ndarray
    sample: np.ndarray
    grad_norm: float
    heywood: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def loading_matrix(self) -> np.ndarray:
        L = np.zeros((self.model.p, self.model.m))
        for r, item in enumerate(self.model.items):
            L[r, self.model.factors.index(self.model.pattern[item])] = self.loadings[item]
        return L

    def phi(self, a: str, b: str) -> float:
        f = self.model.factors
        return float(self.factor_correlations[f.index(a), f.index(b)])

    def to_dict(self) -> dict:
        f = self.model.factors
        return {
            "items": list(self.model.items),
            "factors": list(f),
            "pattern": self.model.pattern,
            "loadings": self.loadings,
            "standardized_loadings": self.std_loadings,
            "unique_variances": self.unique_variances,
            "factor_correlations": {
                f"{a}~~{b}": float(self.factor_correlations[i, j])
                for i, a in enumerate(f)
                for j, b in enumerate(f)
                if i < j
            },
            "discrepancy": self.discrepancy,
            "chi_square": self.chi_square,
            "df": self.df,
            "n_used": self.n_used,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_max_norm": self.grad_norm,
            "heywood_items": self.heywood,
            "warnings": self.warnings,
        }


@dataclass
class FitIndices:
    gfi: float
    cfi: float
    tli: float | None
    nfi: float
    rmsea: float | None
    srmr: float
    chi_square: float
    df: int
    baseline_chi_square: float
    baseline_df: int

    def passes(self) -> dict[str, bool | None]:
        out = {}
        for name, (op, cut) in CUTOFFS.items():
            v = getattr(self, name)
            out[name] = None if v is None else (v > cut if op == ">" else v < cut)
        return out

    def all_pass(self) -> bool:
        return all(v is not False for v in self.passes().values())

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["cutoffs"] = {k: f"{op} {cut:.2f}" for k, (op, cut) in CUTOFFS.items()}
        d["pass"] = self.passes()
        return d

    def to_markdown(self) -> str:
        lines = ["| Fit index | Cutoff | Value | Pass |", "|---|---|---|---|"]
        flags = self.passes()
        for name, (op, cut) in CUTOFFS.items():
            v = getattr(self, name)
            shown = "n/a" if v is None else f"{v:.2f}"
            ok = "n/a" if flags[name] is None else ("yes" if flags[name] else "no")
            lines.append(f"| {name.upper()} | {op} {cut:.2f} | {shown} | {ok} |")
        return "\n".join(lines) + "\n"


def covariance_matrix(matrix: ResponseMatrix, item_subset: Sequence[str]) -> tuple[np.ndarray, int]:
    """Listwise-complete sample covariance (divisor n - 1)."""
    cc = complete_cases(matrix, item_subset)
    x = cc.as_float(item_subset)
    n, p = x.shape
    if n < p + 1:
        raise CfaError(f"{n} complete rows is too few for {p} items")
    S = np.cov(x, rowvar=False, ddof=1).reshape(p, p)
    S = 0.5 * (S + S.T)
    zero = [i for i, v in zip(item_subset, np.diag(S)) if v <= 0]
    if zero:
        raise CfaError(f"zero-variance items: {zero}")
    return S, n


def _check_pd(S: np.ndarray, name="sample covariance matrix S"):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise CfaError(f"{name} must be square")
    if not np.allclose(S, S.T, atol=1e-10 * max(1.0, np.abs(S).max())):
        raise NotPositiveDefiniteError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        ev = np.linalg.eigvalsh(0.5 * (S + S.T)).min()
        raise NotPositiveDefiniteError(
            f"{name} is not positive definite (smallest eigenvalue {ev:.3g})"
        ) from None
    return 0.5 * (S + S.T)


class _Params:
    """Packing of (loadings, factor-correlation raw entries, unique variances)."""

    def __init__(self, model: CfaModel):
        self.model = model
        self.mask = model.loading_mask()
        self.p, self.m = model.p, model.m
        self.tril = np.tril_indices(self.m, -1)
        self.n_corr = len(self.tril[0])

    def split(self, x):
        p = self.p
        return x[:p], x[p : p + self.n_corr], x[p + self.n_corr :]

    def build(self, x):
        lam, v_free, theta = self.split(x)
        L = np.zeros((self.p, self.m))
        L[self.mask] = lam
        V = np.eye(self.m)
        V[self.tril] = v_free
        norms = np.linalg.norm(V, axis=1)
        C = V / norms[:, None]
        Phi = C @ C.T
        np.fill_diagonal(Phi, 1.0)
        return L, V, C, norms, Phi, theta

    def sigma(self, x):
        L, _, _, _, Phi, theta = self.build(x)
        return L @ Phi @ L.T + np.diag(theta)


def discrepancy(x, S, model: CfaModel, logdet_S=None, _pk=None) -> float:
    return discrepancy_and_gradient(x, S, model, logdet_S, _pk)[0]


def discrepancy_and_gradient(x, S, model: CfaModel, logdet_S=None, _pk=None):
    """F_ML and its analytic gradient with respect to the raw parameter vector."""
    pk = _pk or _Params(model)
    L, V, C, norms, Phi, theta = pk.build(np.asarray(x, dtype=float))
    Sigma = L @ Phi @ L.T + np.diag(theta)
    try:
        chol = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        return np.inf, np.zeros_like(x)
    if logdet_S is None:
        logdet_S = np.linalg.slogdet(S)[1]
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    Sinv = np.linalg.inv(Sigma)
    SinvS = Sinv @ S
    p = S.shape[0]
    F = logdet + np.trace(SinvS) - logdet_S - p

    G = Sinv - SinvS @ Sinv
    G = 0.5 * (G + G.T)
    gL = 2.0 * G @ L @ Phi
    g_lam = gL[pk.mask]
    g_theta = np.diag(G).copy()
    if pk.n_corr:
        GPhi = L.T @ G @ L
        gC = 2.0 * GPhi @ C
        gV = np.zeros_like(V)
        for i in range(pk.m):
            c = C[i]
            gV[i] = (gC[i] - c * (c @ gC[i])) / norms[i]
        g_v = gV[pk.tril]
    else:
        g_v = np.zeros(0)
    return float(F), np.concatenate([g_lam, g_v, g_theta])


def start_values(S: np.ndarray, model: CfaModel) -> np.ndarray:
    d = np.diag(S)
    return np.concatenate(
        [0.7 * np.sqrt(d), np.zeros(model.m * (model.m - 1) // 2), 0.5 * d]
    )


def unpack(x, model: CfaModel):
    """(loading matrix, factor correlations, unique variances) from raw params."""
    L, _, _, _, Phi, theta = _Params(model).build(np.asarray(x, dtype=float))
    return L, Phi, theta


def pack(L: np.ndarray, Phi: np.ndarray, theta: np.ndarray, model: CfaModel) -> np.ndarray:
    """Inverse of :func:`unpack` for a valid correlation matrix ``Phi``."""
    pk = _Params(model)
    C = np.linalg.cholesky(Phi)
    V = C / np.diag(C)[:, None]
    return np.concatenate([np.asarray(L)[pk.mask], V[pk.tril], np.asarray(theta, dtype=float)])


def fit_cfa(
    S: np.ndarray, n_used: int, model: CfaModel, x0: np.ndarray | None = None, name: str = "sample covariance matrix S"
) -> CfaFit:
    """Minimise the ML discrepancy for ``model`` on covariance ``S``.

    ``S`` rows/columns follow ``model.items``.
    """
    S = _check_pd(S, name)
    if S.shape[0] != model.p:
        raise CfaError(f"S is {S.shape[0]}x{S.shape[0]} but the model has {model.p} items")
    if model.df < 0:
        raise CfaError(f"model is under-identified (df = {model.df})")
    pk = _Params(model)
    logdet_S = np.linalg.slogdet(S)[1]
    d = np.diag(S)
    floor = HEYWOOD_FLOOR * d
    bounds = [(None, None)] * (model.p + pk.n_corr) + [(f, None) for f in floor]
    x = start_values(S, model) if x0 is None else np.asarray(x0, dtype=float)

    history = []

    def fun(x):
        F, g = discrepancy_and_gradient(x, S, model, logdet_S, pk)
        history.append(F)
        return F, g

    # tolerances tighter than the reporting criteria so parameters are
    # accurate well beyond the convergence flag
    res = minimize(
        fun,
        x,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": MAX_ITER, "maxfun": 4 * MAX_ITER, "ftol": 1e-15, "gtol": 1e-11},
    )
    x = res.x
    F, g = discrepancy_and_gradient(x, S, model, logdet_S, pk)
    at_floor = x[model.p + pk.n_corr :] <= floor * (1 + 1e-6)
    pg = g.copy()
    pg[model.p + pk.n_corr :][at_floor & (g[model.p + pk.n_corr :] > 0)] = 0.0
    grad_norm = float(np.abs(pg).max()) if pg.size else 0.0
    last_change = abs(history[-2] - history[-1]) if len(history) > 1 else np.inf
    converged = bool(np.isfinite(F) and (grad_norm < GRAD_TOL or last_change < FTOL))

    L, Phi, theta = unpack(x, model)
    # orient each factor so its loadings sum to a positive value
    sign = np.where(L.sum(axis=0) < 0, -1.0, 1.0)
    L = L * sign
    Phi = Phi * np.outer(sign, sign)
    Sigma = L @ Phi @ L.T + np.diag(theta)
    Sigma = 0.5 * (Sigma + Sigma.T)
    lam = L.sum(axis=1)
    std = lam / np.sqrt(np.diag(Sigma))

    heywood = [i for i, flag in zip(model.items, at_floor) if flag]
    notes = []
    if heywood:
        notes.append(f"Heywood case: unique variance floored for {heywood}")
    if not converged:
        notes.append(f"did not converge: {res.message}")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    F = max(F, 0.0)
    return CfaFit(
        model=model,
        loadings=dict(zip(model.items, lam.tolist())),
        std_loadings=dict(zip(model.items, std.tolist())),
        factor_correlations=Phi,
        unique_variances=dict(zip(model.items, theta.tolist())),
        discrepancy=float(F),
        chi_square=float((n_used - 1) * F),
        df=model.df,
        n_used=int(n_used),
        converged=converged,
        iterations=int(res.nit),
        implied=Sigma,
        sample=S,
        grad_norm=grad_norm,
        heywood=heywood,
        warnings=notes,
    )


def baseline_independence_fit(S: np.ndarray, n_used: int) -> tuple[float, int]:
    """Chi-square and df of the independence (diagonal) model."""
    S = _check_pd(S)
    p = S.shape[0]
    F = float(np.log(np.diag(S)).sum() - np.linalg.slogdet(S)[1])
    return (n_used - 1) * max(F, 0.0), p * (p - 1) // 2


def _corr(M):
    d = 1.0 / np.sqrt(np.diag(M))
    return M * np.outer(d, d)


def fit_indices(fit: CfaFit, baseline: tuple[float, int], S: np.ndarray | None = None) -> FitIndices:
    if not fit.converged:
        raise CfaError("fit indices require a converged fit")
    S = fit.sample if S is None else np.asarray(S, dtype=float)
    chi_b, df_b = baseline
    chi_m, df_m, n = fit.chi_square, fit.df, fit.n_used
    p = S.shape[0]

    A = np.linalg.solve(fit.implied, S)
    R = A - np.eye(p)
    gfi = 1.0 - np.trace(R @ R) / np.trace(A @ A)

    nfi = (chi_b - chi_m) / chi_b if chi_b > 0 else 1.0
    num = max(chi_m - df_m, 0.0)
    den = max(chi_b - df_b, chi_m - df_m, 0.0)
    cfi = 1.0 - num / den if den > 0 else 1.0
    if df_m > 0 and df_b > 0 and chi_b / df_b != 1.0:
        tli = (chi_b / df_b - chi_m / df_m) / (chi_b / df_b - 1.0)
        rmsea = float(np.sqrt(num / (df_m * (n - 1))))
    else:
        tli = None
        rmsea = None

    resid = _corr(S) - _corr(fit.implied)
    iu = np.triu_indices(p)
    srmr = float(np.sqrt(np.mean(resid[iu] ** 2)))
    return FitIndices(
        gfi=float(gfi),
        cfi=float(cfi),
        tli=None if tli is None else float(tli),
        nfi=float(nfi),
        rmsea=rmsea,
        srmr=srmr,
        chi_square=chi_m,
        df=df_m,
        baseline_chi_square=float(chi_b),
        baseline_df=df_b,
    )


def fit_from_responses(matrix: ResponseMatrix, model: CfaModel) -> tuple[CfaFit, FitIndices]:
    S, n = covariance_matrix(matrix, model.items)
    fit = fit_cfa(S, n, model)
    return fit, fit_indices(fit, baseline_independence_fit(S, n), S)
