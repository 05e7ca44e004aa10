"""Regenerate the bundled population-model presets.

Category proportions are those of a normal variable cut at the half-points
1.5..4.5, with mean and SD solved so the Likert item reproduces the Table 4
mean and SD. Loadings are synthetic values inside the published 0.80-0.90
range (short form: 0.84-0.90).

    python scripts/build_presets.py
"""
import json
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares
from scipy.stats import norm

from taigha.instrument import table4_stats

OUT = Path(__file__).resolve().parents[1] / "src" / "taigha" / "data" / "presets"
CUTS = np.array([1.5, 2.5, 3.5, 4.5])

FULL_LOADINGS = {
    "trust_1": 0.86, "trust_2": 0.80, "trust_3": 0.88, "trust_4": 0.89, "trust_5": 0.87,
    "distrust_1": 0.82, "distrust_2": 0.81, "distrust_3": 0.80, "distrust_4": 0.90, "distrust_5": 0.88,
}
SHORT_LOADINGS = {"trust_4": 0.88, "trust_5": 0.90, "distrust_2": 0.84, "distrust_4": 0.89}

EXTERNALS = {
    "tias": {"trust": 0.45, "distrust": -0.30},
    "propensity_to_trust": {"trust": 0.40, "distrust": -0.15},
    "reading_flow": {"trust": 0.15, "distrust": -0.05},
    "self_efficacy": {"trust": 0.10, "distrust": -0.04},
    "nasa_mental": {"trust": 0.05, "distrust": 0.30},
    "nasa_physical": {"distrust": 0.22},
    "nasa_temporal": {"distrust": 0.18},
    "nasa_effort": {"trust": 0.05, "distrust": 0.07},
    "nasa_performance": {"trust": 0.30},
    "nasa_frustration": {"distrust": 0.35},
}
RELIANCE = {"factor": "trust", "intercept": -0.3, "slope": 1.0}


def proportions(mean, sd):
    def moments(params):
        m, log_s = params
        cdf = np.concatenate([[0.0], norm.cdf((CUTS - m) / np.exp(log_s)), [1.0]])
        p = np.diff(cdf)
        cats = np.arange(1, 6)
        mu = p @ cats
        return p, mu, np.sqrt(p @ (cats - mu) ** 2)

    sol = least_squares(lambda z: np.subtract(moments(z)[1:], (mean, sd)), x0=[mean, np.log(sd)])
    p = moments(sol.x)[0]
    return [round(float(v), 4) for v in p]


def main():
    stats = {row["item"]: row for row in table4_stats()}
    props = {i: proportions(stats[i]["mean"], stats[i]["sd"]) for i in FULL_LOADINGS}
    full = {
        "name": "figure1_full",
        "description": "Two-factor TAIGHA population; synthetic loadings in the published range.",
        "factors": {
            "trust": [i for i in FULL_LOADINGS if i.startswith("trust")],
            "distrust": [i for i in FULL_LOADINGS if i.startswith("distrust")],
        },
        "target_loadings": FULL_LOADINGS,
        "factor_correlations": {"trust~~distrust": -0.84},
        "category_proportions": props,
        "externals": EXTERNALS,
        "reliance": RELIANCE,
        "missing_rate": 0.0,
    }
    short = dict(full)
    short.update(
        name="figure2_short",
        description="Four-item short form population; synthetic loadings in the published range.",
        factors={"trust": ["trust_4", "trust_5"], "distrust": ["distrust_2", "distrust_4"]},
        target_loadings=SHORT_LOADINGS,
        category_proportions={i: props[i] for i in SHORT_LOADINGS},
    )
    OUT.mkdir(parents=True, exist_ok=True)
    for preset in (full, short):
        (OUT / f"{preset['name']}.json").write_text(json.dumps(preset, indent=2) + "\n")
        print("wrote", OUT / f"{preset['name']}.json")


if __name__ == "__main__":
    main()
