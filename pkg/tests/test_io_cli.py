import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from lossy_tullock import SpecificationError
from lossy_tullock.casestudy import CaseStudyConfig, emit_results, run_case_study
from lossy_tullock.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SOLVER, run_cli
from lossy_tullock.io import (
    blotto_to_dict,
    game_to_dict,
    load_spec,
    market_to_dict,
    parse_spec,
    write_json,
)
from lossy_tullock.rhg import battery_player

from conftest import random_spec

BLOTTO = {"budgets": [4.0, 6.0], "prizes": [20.0, 10.0], "betas": [0.3, 0.1],
          "epsilons": [1.0, 1.0]}


def write_spec(tmp_path, doc, name="spec.json"):
    path = tmp_path / name
    write_json(path, {"version": 1, **doc})
    return path


def test_game_round_trip(rng):
    spec = random_spec(rng)
    doc = game_to_dict(spec)
    back = parse_spec({"version": 1, "game": doc["game"], "constraints": doc["constraints"]}).game
    assert game_to_dict(back) == doc


def test_blotto_theta_scales_costs(tmp_path):
    path = write_spec(tmp_path, {"blotto": BLOTTO})
    spec = load_spec(path, theta=2.0).blotto
    np.testing.assert_allclose(spec.unit_costs, [0.6, 0.2])
    assert blotto_to_dict(load_spec(path).blotto) == BLOTTO
    assert load_spec(path).game.n_players == 2


def test_rhg_battery_shorthand():
    market = {"prizes": [1.0, 2.0], "epsilons": [1.0, 1.0], "alphas": [0.1, 0.1],
              "offsets": [[0.0] * 3] * 2}
    spec = parse_spec({"version": 1, "rhg": {"market": market,
                                             "players": [{"battery": {"fleet": 50.0}}]}})
    assert market_to_dict(spec.rhg_market) == market
    assert spec.rhg_horizon == 2
    np.testing.assert_allclose(spec.rhg_players[0].y0, battery_player(50.0, n_steps=2).y0)


@pytest.mark.parametrize("doc,match", [
    ({"blotto": BLOTTO}, "version"),
    ({"version": 1}, "at least one"),
    ({"version": 1, "blotto": {"budgets": [1.0]}}, "prizes"),
])
def test_bad_specs(doc, match):
    with pytest.raises(SpecificationError, match=match):
        parse_spec(doc)


def test_cli_solve_blotto(tmp_path):
    path = write_spec(tmp_path, {"blotto": BLOTTO})
    assert run_cli(["solve-blotto", "--spec", str(path), "--out", str(tmp_path / "o")]) == EXIT_OK
    out = json.loads((tmp_path / "o" / "blotto.json").read_text())
    np.testing.assert_allclose(np.sum(out["strategy"], axis=1), BLOTTO["budgets"])


def test_cli_solve_ne_and_centralized(tmp_path):
    path = write_spec(tmp_path, {"blotto": BLOTTO})
    out = str(tmp_path / "o")
    common = ["--spec", str(path), "--out", out, "--gamma-bar", "0.25", "--tol", "1e-7"]
    assert run_cli(["solve-ne", *common]) == EXIT_OK
    assert run_cli(["solve-so", *common]) == EXIT_OK
    assert run_cli(["check-unique", "--spec", str(path), "--out", out]) == EXIT_OK
    so = json.loads(Path(out, "so.json").read_text())
    assert so["poa"] >= 1.0 - 1e-9
    assert json.loads(Path(out, "uniqueness.json").read_text())["verdict"]


def test_cli_exit_codes(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert run_cli(["solve-blotto", "--spec", str(missing)]) == EXIT_IO
    assert str(missing) in capsys.readouterr().err
    assert run_cli(["no-such-command"]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run_cli(["solve-blotto", "--spec", str(bad)]) == EXIT_CONFIG
    path = write_spec(tmp_path, {"blotto": BLOTTO})
    assert run_cli(["run-rhg", "--spec", str(path)]) == EXIT_CONFIG
    # one inner step cannot reach the tolerance
    assert run_cli(["solve-ne", "--spec", str(path), "--out", str(tmp_path / "o"),
                    "--t-out", "1", "--tol", "1e-12"]) == EXIT_SOLVER


def test_cli_run_rhg(tmp_path):
    market = {"prizes": [20.0, 60.0, 20.0], "epsilons": [10.0] * 3, "alphas": [0.01, 0.1, 0.2],
              "offsets": [[0.0] * 3] * 3}
    path = write_spec(tmp_path, {"rhg": {"market": market, "horizon": 2, "players": [
        {"battery": {"fleet": 10.0, "discharge": 0.5}}, {"battery": {"fleet": 20.0}}]}})
    assert run_cli(["run-rhg", "--spec", str(path), "--out", str(tmp_path)]) == EXIT_OK
    rows = list(csv.reader((tmp_path / "rhg_trajectory.csv").open()))
    assert rows[0][:2] == ["player", "step"] and len(rows) == 1 + 2 * 3


def small_config(**kw):
    base = CaseStudyConfig.default()
    steps = {k: getattr(base, k)[3:6] for k in ("step_prizes", "step_epsilons", "step_alphas")}
    return CaseStudyConfig.default(theta_points=2, horizons=(1, 2), total_steps=3,
                                   compare_methods=False, **steps, **kw)


def test_case_study_cli_poa(tmp_path):
    assert run_cli(["case-study", "poa", "--theta-grid", "3", "--out", str(tmp_path)]) == EXIT_OK
    rows = list(csv.reader((tmp_path / "poa.csv").open()))
    assert rows[0] == ["theta", "welf_so", "welf_ne", "poa"]
    assert len(rows) == 4
    assert all(float(r[3]) >= 1.0 - 1e-9 for r in rows[1:])


def test_manifest_covers_outputs(tmp_path):
    files = emit_results(run_case_study(small_config()), tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest["files"]) == set(files) - {"manifest.json", "timings.json"}
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() == digest
    assert manifest["config_sha256"] == small_config().digest()


def test_case_study_outputs_are_deterministic(tmp_path):
    cfg = small_config()
    for d in ("a", "b"):
        emit_results(run_case_study(cfg), tmp_path / d)
    names = sorted(p.name for p in (tmp_path / "a").iterdir() if p.name != "timings.json")
    assert names
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_case_study_config_validation():
    with pytest.raises(SpecificationError, match="unknown"):
        CaseStudyConfig.from_dict({"bogus": 1})
    with pytest.raises(SpecificationError):
        run_case_study(small_config(), ["nope"])
    assert small_config().digest() != small_config(seed=1).digest()
