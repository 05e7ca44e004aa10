"""Synthetic respondents from a factor model with ordinal discretisation.

Latent item responses y* = Lambda f + e are cut at per-item thresholds into
Likert categories. Companion instruments are linear functions of the factors
plus noise, and advice reliance follows a logistic link on one factor.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate
from scipy.stats import norm

from .dataset import CHOICES, DecisionRecord, ResponseMatrix
from .instrument import read_text

N_SCENARIOS = 27
PRESETS = ("figure1_full", "figure2_short")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class PopulationModel:
    items: tuple[str, ...]
    factors: tuple[str, ...]
    pattern: Mapping[str, str]
    loadings: Mapping[str, float]
    phi: np.ndarray
    thresholds: Mapping[str, tuple[float, ...]]
    externals: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    reliance: Mapping[str, float] | None = None
    missing_rate: float = 0.0
    scale_min: int = 1
    target_loadings: Mapping[str, float] | None = None
    name: str = ""

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        if phi.shape != (len(self.factors),) * 2:
            raise ModelError("phi must be factors x factors")
        if not np.allclose(phi, phi.T) or not np.allclose(np.diag(phi), 1.0):
            raise ModelError("phi must be symmetric with unit diagonal")
        if np.linalg.eigvalsh(phi).min() <= 0:
            raise ModelError("phi must be positive definite")
        for i in self.items:
            t = np.asarray(self.thresholds[i])
            if np.any(np.diff(t) <= 0):
                raise ModelError(f"thresholds for {i!r} must be strictly ascending")
            if abs(self.loadings[i]) > 1:
                raise ModelError(f"latent loading for {i!r} exceeds 1")
        if not 0 <= self.missing_rate < 1:
            raise ModelError("missing_rate must lie in [0, 1)")

    @property
    def p(self):
        return len(self.items)

    def loading_matrix(self) -> np.ndarray:
        L = np.zeros((self.p, len(self.factors)))
        for r, i in enumerate(self.items):
            L[r, self.factors.index(self.pattern[i])] = self.loadings[i]
        return L

    def unique_variances(self) -> np.ndarray:
        return 1.0 - np.array([self.loadings[i] ** 2 for i in self.items])

    def factor_lists(self) -> dict[str, list[str]]:
        return {f: [i for i in self.items if self.pattern[i] == f] for f in self.factors}

    def truth_loadings(self) -> dict[str, float]:
        """Observed-metric loadings the preset was calibrated to (latent ones otherwise)."""
        return dict(self.target_loadings or self.loadings)

    def to_dict(self) -> dict:
        f = self.factors
        return {
            "name": self.name,
            "factors": self.factor_lists(),
            "loadings": dict(self.loadings),
            "target_loadings": None if self.target_loadings is None else dict(self.target_loadings),
            "factor_correlations": {
                f"{a}~~{b}": float(self.phi[i, j]) for i, a in enumerate(f) for j, b in enumerate(f) if i < j
            },
            "thresholds": {i: list(t) for i, t in self.thresholds.items()},
            "externals": {k: dict(v) for k, v in self.externals.items()},
            "reliance": None if self.reliance is None else dict(self.reliance),
            "missing_rate": self.missing_rate,
            "scale_min": self.scale_min,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PopulationModel":
        groups = data["factors"]
        factors = tuple(groups)
        items, pattern = [], {}
        for f, members in groups.items():
            for i in members:
                items.append(i)
                pattern[i] = f
        phi = np.eye(len(factors))
        for key, v in data.get("factor_correlations", {}).items():
            a, b = key.split("~~")
            ia, ib = factors.index(a), factors.index(b)
            phi[ia, ib] = phi[ib, ia] = v
        if "thresholds" in data:
            thresholds = {i: tuple(data["thresholds"][i]) for i in items}
        else:
            thresholds = {i: thresholds_from_proportions(data["category_proportions"][i]) for i in items}
        target = data.get("target_loadings")
        if data.get("loadings"):
            loadings = {i: float(data["loadings"][i]) for i in items}
        elif target:
            loadings = {i: calibrate_loading(target[i], thresholds[i]) for i in items}
        else:
            raise ModelError("population model needs loadings or target_loadings")
        return cls(
            items=tuple(items),
            factors=factors,
            pattern=pattern,
            loadings=loadings,
            phi=phi,
            thresholds=thresholds,
            externals=data.get("externals", {}),
            reliance=data.get("reliance"),
            missing_rate=float(data.get("missing_rate", 0.0)),
            scale_min=int(data.get("scale_min", 1)),
            target_loadings=target,
            name=data.get("name", ""),
        )

    @classmethod
    def from_json(cls, path) -> "PopulationModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def thresholds_from_proportions(props: Sequence[float]) -> tuple[float, ...]:
    """Standard-normal cut points reproducing category proportions."""
    p = np.asarray(props, dtype=float)
    if np.any(p <= 0):
        raise ModelError("category proportions must be positive")
    cum = np.cumsum(p / p.sum())[:-1]
    return tuple(norm.ppf(cum).tolist())


def category_scores(thresholds: Sequence[float], scale_min: int = 1) -> tuple[float, float, float]:
    """Mean, SD and Cov(y*, Y) of Y = scale_min + #(y* > tau) for standard-normal y*."""
    t = np.asarray(thresholds, dtype=float)
    cdf = np.concatenate([[0.0], norm.cdf(t), [1.0]])
    probs = np.diff(cdf)
    cats = scale_min + np.arange(probs.size)
    mean = probs @ cats
    sd = np.sqrt(probs @ (cats - mean) ** 2)
    return float(mean), float(sd), float(norm.pdf(t).sum())


def calibrate_loading(target: float, thresholds: Sequence[float]) -> float:
    """Latent loading whose discretised indicator has roughly ``target`` loading.

    Discretisation scales an indicator's correlations with any continuous
    variable by corr(y*, Y); the latent loading is inflated by that factor.
    """
    _, sd, cov = category_scores(thresholds)
    lam = target * sd / cov
    if lam >= 1:
        raise ModelError(f"target loading {target} unreachable through these thresholds")
    return float(lam)


def load_preset(name: str) -> PopulationModel:
    if name not in PRESETS:
        raise ModelError(f"unknown preset {name!r}; choose from {PRESETS}")
    return PopulationModel.from_dict(json.loads(read_text(f"presets/{name}.json")))


def population_covariance(model: PopulationModel) -> np.ndarray:
    """Latent-scale Sigma = Lambda Phi Lambda^T + Theta."""
    L = model.loading_matrix()
    return L @ model.phi @ L.T + np.diag(model.unique_variances())


def ordinal_covariance(model: PopulationModel) -> np.ndarray:
    """Population covariance of the discretised items by numerical integration.

    Uses Cov(1{y_i > a}, 1{y_j > b}) = integral over r in [0, rho] of the
    bivariate normal density at (a, b; r).
    """
    rho = population_covariance(model)
    p = model.p
    out = np.zeros((p, p))
    taus = [np.asarray(model.thresholds[i]) for i in model.items]
    for i in range(p):
        out[i, i] = category_scores(taus[i], model.scale_min)[1] ** 2
        for j in range(i):
            total = 0.0
            for a in taus[i]:
                for b in taus[j]:
                    def dens(r, a=a, b=b):
                        q = 1.0 - r * r
                        return np.exp(-(a * a - 2 * r * a * b + b * b) / (2 * q)) / (2 * np.pi * np.sqrt(q))
                    total += integrate.quad(dens, 0.0, rho[i, j], epsabs=1e-12, epsrel=1e-10)[0]
            out[i, j] = out[j, i] = total
    return out


def ordinal_correlation(model: PopulationModel) -> np.ndarray:
    C = ordinal_covariance(model)
    d = 1.0 / np.sqrt(np.diag(C))
    return C * np.outer(d, d)


@dataclass
class SimulatedStudy:
    responses: ResponseMatrix
    decisions: list[DecisionRecord]
    externals: dict[str, np.ndarray]
    factor_scores: np.ndarray
    latent: np.ndarray


def _scenario_advice(k: int) -> str:
    return CHOICES[k % len(CHOICES)]


def simulate_responses(model: PopulationModel, n: int, seed: int | np.random.SeedSequence) -> SimulatedStudy:
    if n < 1:
        raise ModelError("n must be at least 1")
    rng = np.random.default_rng(seed)
    m = len(model.factors)
    f = rng.standard_normal((n, m)) @ np.linalg.cholesky(model.phi).T
    L = model.loading_matrix()
    e = rng.standard_normal((n, model.p)) * np.sqrt(model.unique_variances())
    latent = f @ L.T + e
    values = np.empty((n, model.p), dtype=np.int64)
    for k, item in enumerate(model.items):
        values[:, k] = model.scale_min + np.searchsorted(model.thresholds[item], latent[:, k])
    mask = np.zeros_like(values, dtype=bool)
    if model.missing_rate > 0:
        mask = rng.random(values.shape) < model.missing_rate
    rids = tuple(f"r{i + 1:05d}" for i in range(n))
    responses = ResponseMatrix(values, mask, model.items, rids)

    externals = {}
    for name, coefs in model.externals.items():
        w = np.array([coefs.get(fac, 0.0) for fac in model.factors])
        explained = float(w @ model.phi @ w)
        if explained > 1:
            raise ModelError(f"external {name!r} explains more than unit variance")
        noise = rng.standard_normal(n) * np.sqrt(1.0 - explained)
        externals[name] = f @ w + noise

    decisions = []
    if model.reliance is not None:
        fac = model.factors.index(model.reliance.get("factor", model.factors[0]))
        scen = rng.integers(0, N_SCENARIOS, n)
        initial = rng.integers(0, len(CHOICES), n)
        u = rng.random(n)
        logit = model.reliance.get("intercept", 0.0) + model.reliance.get("slope", 1.0) * f[:, fac]
        follow = u < 1.0 / (1.0 + np.exp(-logit))
        for k in range(n):
            advice = _scenario_advice(int(scen[k]))
            init = CHOICES[int(initial[k])]
            final = advice if (init != advice and follow[k]) else init
            decisions.append(DecisionRecord(rids[k], f"scenario_{int(scen[k]) + 1:02d}", init, advice, final))
    return SimulatedStudy(responses, decisions, externals, f, latent)


def replicate_seeds(seed: int, count: int) -> list[np.random.SeedSequence]:
    """Independent per-replicate seeds derived from (seed, index)."""
    return [np.random.SeedSequence([seed, k]) for k in range(count)]
