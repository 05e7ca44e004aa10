"""Convergent, divergent and criterion validity correlations."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, asdict
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .dataset import DecisionRecord

ROLES = ("convergent", "divergent", "criterion")
CONVERGENT_MIN = 0.30
TOO_HIGH = 0.90
DIVERGENT_MAX = 0.30
# self-rated performance and frustration relate to trust by design
EXCLUDED_TLX = ("nasa_performance", "nasa_frustration")
# roles of the companion instruments; the two TLX scales above are not analysed
DEFAULT_ROLES = {
    "tias": "convergent",
    "propensity_to_trust": "convergent",
    "reading_flow": "divergent",
    "self_efficacy": "divergent",
    "nasa_mental": "divergent",
    "nasa_physical": "divergent",
    "nasa_temporal": "divergent",
    "nasa_effort": "divergent",
}


class AssocError(ValueError):
    pass


@dataclass
class ValidityClassification:
    scale: str
    measure: str
    r: float
    ci_low: float
    ci_high: float
    n: int
    role: str
    verdict: str

    def to_dict(self):
        return asdict(self)


def correlation_with_ci(x, y, level: float = 0.95) -> tuple[float, float, float, int]:
    """Pearson r on pairwise-complete data with a Fisher-z interval."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = ~(np.isnan(x) | np.isnan(y))
    x, y = x[ok], y[ok]
    n = x.size
    if n < 4:
        raise AssocError(f"need at least 4 complete pairs, got {n}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise AssocError("constant series")
    xd, yd = x - x.mean(), y - y.mean()
    r = float(np.clip(xd @ yd / np.sqrt((xd @ xd) * (yd @ yd)), -1.0, 1.0))
    lo, hi = fisher_ci(r, n, level)
    return r, lo, hi, n


def fisher_ci(r: float, n: int, level: float = 0.95) -> tuple[float, float]:
    z = norm.ppf(0.5 + level / 2.0)
    if abs(r) >= 1.0:
        return r, r
    center = np.arctanh(r)
    half = z / np.sqrt(n - 3)
    return float(np.tanh(center - half)), float(np.tanh(center + half))


def code_reliance(records: Sequence[DecisionRecord]) -> tuple[list[DecisionRecord], dict[str, int]]:
    """Keep records whose initial choice differed from the advice; code a switch to the advice as 1."""
    included = [r for r in records if r.initial_choice != r.ai_advice]
    return included, {r.respondent_id: int(r.final_choice == r.ai_advice) for r in included}


def classify(r: float, role: str) -> str:
    a = abs(r)
    if role == "convergent":
        if a > TOO_HIGH:
            return "too_high"
        return "supports" if a > CONVERGENT_MIN else "fails"
    if role == "divergent":
        return "supports" if a < DIVERGENT_MAX else "fails"
    if role == "criterion":
        return "supports" if a > CONVERGENT_MIN else "fails"
    raise AssocError(f"unknown role {role!r}")


def validity_report(
    scores: Mapping[str, Sequence[float]],
    externals: Mapping[str, Sequence[float]],
    roles: Mapping[str, str],
    reliance: Mapping[str, int] | None = None,
    respondent_ids: Sequence[str] | None = None,
    level: float = 0.95,
) -> list[ValidityClassification]:
    """Correlate every scale score with every external measure.

    Criterion rows use only respondents present in ``reliance`` (those whose
    initial appraisal differed from the advice). Convergent measures are also
    correlated with reliance, for comparison with the scales.
    """
    missing = [m for m in externals if m not in roles]
    if missing:
        raise AssocError(f"no role assigned to {missing}")
    out = []
    for scale, s in scores.items():
        for measure, e in externals.items():
            role = roles[measure]
            if role == "criterion":
                continue
            r, lo, hi, n = correlation_with_ci(s, e, level)
            out.append(ValidityClassification(scale, measure, r, lo, hi, n, role, classify(r, role)))

    if reliance:
        if respondent_ids is None:
            raise AssocError("respondent ids are needed to align reliance codes")
        pos = {rid: k for k, rid in enumerate(respondent_ids)}
        rows = [pos[rid] for rid in reliance if rid in pos]
        y = np.array([reliance[respondent_ids[k]] for k in rows], dtype=float)
        series = dict(scores)
        series.update({m: v for m, v in externals.items() if roles[m] == "convergent"})
        for name, v in series.items():
            x = np.asarray(v, dtype=float)[rows]
            r, lo, hi, n = correlation_with_ci(x, y, level)
            out.append(
                ValidityClassification(name, "reliance", r, lo, hi, n, "criterion", classify(r, "criterion"))
            )
    return out


def correlation_table(series: Mapping[str, Sequence[float]]) -> tuple[list[str], np.ndarray]:
    """Pairwise-complete correlation matrix over named series."""
    names = list(series)
    R = np.eye(len(names))
    for i, a in enumerate(names):
        for j in range(i):
            r = correlation_with_ci(series[a], series[names[j]])[0]
            R[i, j] = R[j, i] = r
    return names, R


def table_markdown(names: Sequence[str], R: np.ndarray) -> str:
    lines = ["| | " + " | ".join(names) + " |", "|---" * (len(names) + 1) + "|"]
    for i, a in enumerate(names):
        cells = [("1" if j == i else f"{R[i, j]:.2f}") if j <= i else "" for j in range(len(names))]
        lines.append(f"| {a} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def classifications_markdown(rows: Sequence[ValidityClassification]) -> str:
    lines = ["| Scale | Measure | Role | r | 95% CI | n | Verdict |", "|---|---|---|---|---|---|---|"]
    for c in rows:
        lines.append(
            f"| {c.scale} | {c.measure} | {c.role} | {c.r:.2f} | [{c.ci_low:.2f}, {c.ci_high:.2f}] "
            f"| {c.n} | {c.verdict} |"
        )
    return "\n".join(lines) + "\n"


def classifications_csv(rows: Sequence[ValidityClassification]) -> str:
    buf = io.StringIO()
    fields = list(ValidityClassification.__dataclass_fields__)
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for c in rows:
        w.writerow(c.to_dict())
    return buf.getvalue()
