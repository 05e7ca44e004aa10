import json
import subprocess
import sys

import numpy as np
import pytest

from taigha import reports
from taigha.cli import main, run_pipeline


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_validate_content_on_bundled_table(capsys):
    assert main(["validate-content", "--cutoff", "0.8", "--policy", "conservative-leq"]) == 0
    rep = _json(capsys)
    body = rep.get("content_validity", rep)
    assert round(body["S-CVI/Ave"], 2) == 0.99 and body["S-CVI/UA"] == pytest.approx(0.9)


def test_validate_face_from_ratings_csv(tmp_path, capsys):
    ratings = np.full((30, 3), 4)
    ratings[0, 1] = 2
    path = tmp_path / "lay.csv"
    path.write_text("judge,a,b,c\n" + "\n".join(f"{k},{','.join(map(str, r))}" for k, r in enumerate(ratings)) + "\n")
    assert main(["validate-face", "--ratings", str(path)]) == 0
    body = _json(capsys)
    body = body.get("face_validity", body)
    assert body["per_item_index"]["b"] == pytest.approx(29 / 30)


def test_simulate_pipes_into_cfa():
    sim = subprocess.run(
        [sys.executable, "-m", "taigha.cli", "simulate", "--preset", "figure1_full", "--n", "385", "--seed", "7"],
        capture_output=True, check=True, text=True,
    )
    cfa = subprocess.run(
        [sys.executable, "-m", "taigha.cli", "cfa", "--model", "taigha.json"],
        input=sim.stdout, capture_output=True, text=True,
    )
    assert cfa.returncode == 0, cfa.stderr
    rep = json.loads(cfa.stdout)
    body = rep.get("cfa", rep)
    assert all(body["fit_indices"]["pass"].values())


def test_non_pd_covariance_exits_nonzero(tmp_path, capsys):
    p = 10
    S = np.eye(p)
    S[0, 1] = S[1, 0] = 1.5
    path = tmp_path / "bad_cov.csv"
    np.savetxt(path, S, delimiter=",")
    code = main(["cfa", "--covariance", str(path), "--n", "385"])
    err = capsys.readouterr().err
    assert code == 1
    assert "[cfa]" in err and "bad_cov.csv" in err and "not positive definite" in err


def test_bad_input_is_stage_tagged(tmp_path, capsys):
    path = tmp_path / "r.csv"
    path.write_text("trust_1,trust_2\n1,9\n")
    assert main(["item-stats", "--data", str(path)]) == 1
    assert "[item-stats]" in capsys.readouterr().err


def test_seed_accepted_after_subcommand(capsys):
    assert main(["simulate", "--n", "5", "--seed", "3"]) == 0
    a = capsys.readouterr().out
    assert main(["--seed", "3", "simulate", "--n", "5"]) == 0
    assert capsys.readouterr().out == a


def test_sub_seeds_differ_by_stage():
    assert reports.derive_seed(1, "simulate") != reports.derive_seed(1, "reduce")
    assert reports.derive_seed(1, "simulate") == reports.derive_seed(1, "simulate")


def test_pipeline_bundle_layout(tmp_path):
    cfg = {"seed": 5, "stages": ["content", "face", "simulate", "item-stats", "cfa", "reliability", "validity", "shortform"]}
    run_pipeline(cfg, str(tmp_path / "b"))
    root = tmp_path / "b"
    assert (root / "summary.md").exists() and (root / "meta.json").exists()
    names = {p.stem for p in (root / "reports").glob("*.json")}
    assert {"content_validity", "face_validity", "cfa", "reliability", "shortform"} <= names
    assert list((root / "tables").glob("*.csv"))
    summary = (root / "summary.md").read_text()
    for heading in ("Table 2", "Table 4", "Table 8"):
        assert heading in summary


def test_pipeline_rejects_unknown_stage(tmp_path):
    from taigha.cli import StageError

    with pytest.raises(StageError, match="unknown stages"):
        run_pipeline({"stages": ["astrology"]}, str(tmp_path))
