import json
import math

import numpy as np
import pytest

from infobounds import suite
from infobounds.cli import main
from infobounds.config import ExperimentConfig, load_model, load_spec, parse_matrix, parse_model_string
from infobounds.errors import ConfigError
from infobounds.models import Exponential, Normal


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def test_model_strings_and_aliases():
    assert parse_model_string("normal:sigma=2,mean=1") == {"model": "normal", "sigma": "2", "mean": "1"}
    n = load_model("normal:sigma=2")
    assert isinstance(n, Normal) and n.sd == 2.0
    e = load_model("exponential:beta=3")
    assert isinstance(e, Exponential) and e.rate == 3.0


def test_unknown_model_keys_rejected():
    with pytest.raises(ConfigError):
        load_spec("normal:width=2")
    with pytest.raises(ConfigError):
        load_spec("banana")


def test_matrix_forms(tmp_path):
    np.testing.assert_array_equal(parse_matrix([[1, 2], [3, 4]], "K"), [[1, 2], [3, 4]])
    np.testing.assert_array_equal(parse_matrix({"shape": [2, 2], "data": [1, 2, 3, 4]}, "K"), [[1, 2], [3, 4]])
    (tmp_path / "k.csv").write_text("2,0.5\n0.5,1\n")
    np.testing.assert_array_equal(parse_matrix("k.csv", "K", str(tmp_path)), [[2, 0.5], [0.5, 1]])


def test_model_file_with_csv_matrix(tmp_path):
    (tmp_path / "k.csv").write_text("4,0\n0,4\n")
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"model": "gaussian-scalar", "s": [1, 0], "K": "k.csv", "sigma2": 1}))
    m = load_model(str(path))
    assert m.bayes_fi == pytest.approx(1.25)


def test_missing_model_file():
    with pytest.raises(ConfigError, match="model file not found"):
        load_spec("/nonexistent/model.json")


def test_config_round_trip_and_hash():
    cfg = ExperimentConfig.from_dict({"model": "normal:sigma=1", "computation": "tv", "seed": 3,
                                      "steps": [0.2, 0.1], "tolerances": {"sigmas": 4.0}})
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()
    assert again.config_hash == cfg.config_hash
    other = ExperimentConfig.from_dict({"model": "normal:sigma=1", "computation": "tv", "seed": 4})
    assert other.config_hash != cfg.config_hash


def test_config_rejects_unknown_fields():
    with pytest.raises(ConfigError, match="unknown config fields"):
        ExperimentConfig.from_dict({"model": "normal", "computation": "tv", "colour": "red"})
    with pytest.raises(ConfigError, match="tolerance"):
        ExperimentConfig.from_dict({"model": "normal", "computation": "tv", "tolerances": {"rtol": 1}})
    with pytest.raises(ConfigError, match="missing"):
        ExperimentConfig.from_dict({"model": "normal"})


# --------------------------------------------------------------------------
# CLI verbs
# --------------------------------------------------------------------------


def test_tv_normal(capsys):
    code, out, _ = run(capsys, "tv", "--model", "normal:sigma=1", "--format", "table")
    assert code == 0 and "0.797885" in out


def test_tv_json_full_precision(capsys):
    code, out, _ = run(capsys, "tv", "--model", "normal:sigma=1")
    rec = json.loads(out.splitlines()[0])
    assert rec["value"] == pytest.approx(math.sqrt(2 / math.pi), abs=1e-15)


def test_vantrees_equality(capsys):
    code, out, _ = run(capsys, "vantrees", "--samples", "1e5")
    rec = json.loads(out.splitlines()[0])
    assert code == 0 and rec["verdict"] == "holds"
    assert abs(rec["slack"]) <= 3 * math.hypot(rec["lhs_se"], rec["rhs_se"])


def test_missing_file_exit_code(capsys):
    code, _, err = run(capsys, "fi", "--model", "/nonexistent/model.json")
    assert code == 2 and "model file not found" in err


def test_usage_error_exit_code(capsys):
    code, _, _ = run(capsys, "tv", "--format", "xml")
    assert code == 2
    code, _, _ = run(capsys, "no-such-verb")
    assert code == 2


@pytest.mark.parametrize("argv", [
    ["fi", "--theta", "0.3"],
    ["fim", "--model", "imaging", "--theta", "0,0"],
    ["bayes-fi", "--samples", "1e4"],
    ["auc", "--theta0", "0", "--theta1", "1", "--samples", "1e4"],
    ["mpe", "--theta0", "0", "--theta1", "1", "--samples", "1e4"],
    ["mpe-slope", "--backend", "analytic"],
    ["tv-average", "--samples", "1e3"],
    ["zz-bound"],
    ["schwarz", "--backend", "analytic"],
    ["schwarz", "--model", "exponential-prior:rate=2", "--backend", "analytic"],
])
def test_verbs_run(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    assert out.strip()


def test_csv_output(capsys, tmp_path):
    out = tmp_path / "roc.csv"
    code, _, _ = run(capsys, "auc", "--theta0", "0", "--theta1", "1", "--samples", "2000", "--format", "csv",
                     "--out", str(out))
    assert code == 0 and out.read_text().splitlines()[0].count(",") >= 1


def test_config_file_drives_command(capsys, tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"model": "normal:sigma=0.5", "computation": "tv"}))
    code, out, _ = run(capsys, "tv", "--config", str(path))
    assert code == 0
    assert json.loads(out.splitlines()[0])["value"] == pytest.approx(2 * math.sqrt(2 / math.pi))
    code, _, err = run(capsys, "fi", "--config", str(path))
    assert code == 2 and "not 'fi'" in err


def test_exponential_minus_side_is_inconclusive(capsys):
    code, _, _ = run(capsys, "schwarz", "--model", "exponential-prior", "--side", "minus", "--backend",
                     "analytic")
    assert code == 3


# --------------------------------------------------------------------------
# reproduce-paper
# --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def default_suite():
    return suite.reproduce(seed=0)


def test_reproduce_all_hold(default_suite):
    assert default_suite.verdict == "holds"
    assert default_suite.counts().get("violated", 0) == 0


def test_reproduce_table_constants(default_suite):
    table = default_suite.to_markdown()
    assert table.count("0.797885") >= 3
    assert "1.000" in table


@pytest.mark.slow
def test_reproduce_byte_identical(capsys, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["reproduce-paper", "--samples", "1e4", "--out", str(a), "--format", "json"]) in (0, 3)
    assert main(["reproduce-paper", "--samples", "1e4", "--out", str(b), "--format", "json"]) in (0, 3)
    capsys.readouterr()
    assert a.read_bytes() == b.read_bytes()


def test_reproduce_cheap_mode_never_violated(capsys, tmp_path):
    out = tmp_path / "cheap.jsonl"
    code = main(["reproduce-paper", "--samples", "1e4", "--out", str(out), "--format", "json"])
    capsys.readouterr()
    verdicts = {json.loads(line).get("verdict") for line in out.read_text().splitlines()}
    assert code in (0, 3)
    assert "violated" not in verdicts
