import csv
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from anisotm.cli import EXIT_CONFIG, EXIT_OK, ConfigError, ExperimentConfig, main

L2 = {"form": "pnorm", "p": 2, "N": 2}


def _write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return path


def _run(tmp_path, doc, *extra, out="out"):
    cfg = _write_config(tmp_path, doc)
    code = main(["--config", str(cfg), "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


# -- config parsing ---------------------------------------------------------------


def test_config_round_trip():
    cfg = ExperimentConfig.from_dict({"command": "sweep", "gauge": L2,
                                      "params": {"q": 2, "p": 3, "lam_ratio": 1.0},
                                      "controls": {"theorem": "T11"}, "seed": 7})
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()


@given(st.sampled_from(["verify", "sweep", "sup", "mu", "symcheck"]), st.integers(0, 2**31),
       st.floats(0.05, 1.5), st.sampled_from([1.0, 2.0, 4.0]))
def test_config_round_trip_property(command, seed, lam_ratio, q):
    cfg = ExperimentConfig(command=command, gauge={"form": "pnorm", "p": 4.0, "N": 2},
                           params={"q": q, "beta": 0.5, "lam_ratio": lam_ratio}, seed=seed)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


def test_critical_beta_is_config_error(tmp_path, capsys):
    code, _ = _run(tmp_path, {"command": "verify", "gauge": L2, "params": {"beta": 2}})
    assert code == EXIT_CONFIG
    assert "β must be < N" in capsys.readouterr().err


def test_json_syntax_error_reports_position(tmp_path, capsys):
    code, _ = _run(tmp_path, '{"command": "verify",\n "gauge": {"form": "pnorm" "p": 2}}')
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "line 2, column" in err
    with pytest.raises(ConfigError, match="line 2, column"):
        ExperimentConfig.from_json('{"command": "verify",\n ]')


@pytest.mark.parametrize("doc,field", [
    ({"command": "fit", "gauge": L2}, "command"),
    ({"command": "verify"}, "gauge"),
    ({"command": "verify", "gauge": L2, "colour": 1}, "colour"),
    ({"command": "verify", "gauge": L2, "params": {"lam": 1, "lam_ratio": 1}}, "params"),
    ({"command": "verify", "gauge": L2, "params": {"eta": 1}}, "params.eta"),
    ({"command": "verify", "gauge": L2, "controls": {"budget": 3}}, "controls.budget"),
    ({"command": "sweep", "gauge": L2, "controls": {"theorem": "T99"}}, "controls.theorem"),
    ({"command": "sweep", "gauge": L2, "controls": {"n_list": [8, 4]}}, "controls.n_list"),
    ({"command": "sup", "gauge": L2, "controls": {"kind": "max"}}, "controls.kind"),
    ({"command": "verify", "gauge": {"form": "pnorm", "p": 0.5, "N": 2}}, "gauge"),
    ({"command": "verify", "gauge": L2, "seed": -1}, "seed"),
])
def test_config_errors_name_the_field(doc, field):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(doc)
    assert str(info.value).startswith(field)


def test_missing_config_file(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG
    assert "absent.json" in capsys.readouterr().err


# -- commands -------------------------------------------------------------------


def test_verify_finsler_l2(tmp_path, capsys):
    code, out = _run(tmp_path, {"command": "verify", "gauge": L2,
                                "controls": {"module": "finsler"}})
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["exit"] == 0
    assert summary["report"]["kappa_N"] == pytest.approx(math.pi, abs=1e-3)
    doc = json.loads((out / "verify.json").read_text())
    assert all(r["passed"] for r in doc["rows"])


def test_sweep_output_columns(tmp_path):
    doc = {"command": "sweep", "gauge": L2, "params": {"q": 2, "p": 2, "lam_ratio": 1.0},
           "controls": {"theorem": "T11", "n_list": [4, 8, 16, 32]}}
    code, out = _run(tmp_path, doc, "--format", "csv")
    assert code == EXIT_OK
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert len(rows) == 4
    for r in rows:
        assert float(r["fitted_exponent"]) > 0
        assert float(r["predicted_exponent"]) == pytest.approx(1.0)
        # every row carries the full parameter tuple
        assert {"param_N", "param_q", "param_beta", "param_lam", "param_p", "gauge", "seed"} <= set(r)
        assert float(r["lam_ratio"]) == pytest.approx(1.0)


def test_mu_ratio_column(tmp_path):
    doc = {"command": "mu", "gauge": L2, "params": {"q": 2},
           "controls": {"h_grid": [1, 2, 4], "starts": 2}}
    code, out = _run(tmp_path, doc)
    assert code == EXIT_OK
    rows = json.loads((out / "mu.json").read_text())["rows"]
    assert "ratio" not in rows[0]
    assert all(0.1 < r["ratio"] < 10 for r in rows[1:])


def test_mu_infeasible_h_is_config_error(tmp_path):
    doc = {"command": "mu", "gauge": L2, "params": {"q": 2}, "controls": {"h_grid": [3.0], "K": 3}}
    assert _run(tmp_path, doc)[0] == EXIT_CONFIG


def test_identity_rejects_b_above_N(tmp_path):
    doc = {"command": "sup", "gauge": L2, "params": {"a": 2, "b": 3},
           "controls": {"kind": "identity", "budget": 10, "lam_ratios": [0.5]}}
    assert _run(tmp_path, doc)[0] == EXIT_CONFIG


def test_command_and_seed_overrides(tmp_path, capsys):
    cfg = _write_config(tmp_path, {"command": "sweep", "gauge": L2, "seed": 1})
    code = main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "5"])
    assert code == EXIT_OK
    doc = json.loads((tmp_path / "o" / "verify.json").read_text())
    assert doc["config"]["command"] == "verify" and doc["config"]["seed"] == 5


# -- determinism ------------------------------------------------------------------

CHEAP = [
    {"command": "sweep", "gauge": {"form": "pnorm", "p": 4, "N": 2},
     "params": {"q": 2, "p": 2, "lam_ratio": 1.2}, "controls": {"theorem": "T16", "n_list": [8, 16, 24, 32]}},
    {"command": "sup", "gauge": L2, "params": {"q": 2, "beta": 1},
     "controls": {"kind": "band", "budget": 30, "lam_ratios": [0.8, 0.9, 0.99]}},
    {"command": "mu", "gauge": L2, "params": {"q": 2}, "controls": {"h_grid": [1, 2, 3], "starts": 3}},
    {"command": "symcheck", "gauge": {"form": "pnorm", "p": 4, "N": 2}, "params": {"q": 2},
     "controls": {"count": 3, "n_grid": 48}},
]


@pytest.mark.parametrize("doc", CHEAP, ids=[d["command"] for d in CHEAP])
@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_byte_identical_reruns(tmp_path, doc, fmt):
    doc = {**doc, "seed": 11}
    name = f"{doc['command']}.{fmt}"
    _, a = _run(tmp_path, doc, "--format", fmt, out="a")
    _, b = _run(tmp_path, doc, "--format", fmt, out="b")
    _, c = _run(tmp_path, doc, "--format", fmt, "--jobs", "2", out="c")
    first = (a / name).read_bytes()
    assert first == (b / name).read_bytes() == (c / name).read_bytes()
    assert b"time" not in first.lower()
