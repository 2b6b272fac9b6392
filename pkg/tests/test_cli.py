import json
import subprocess
import sys
from pathlib import Path

import pytest

from dynkit.cli import dump_json, main, validate_config
from dynkit.errors import SchemaViolation

sys.path.insert(0, str(Path(__file__).parent))
from cli_cases import CASES  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"


@pytest.mark.parametrize("name", sorted(CASES))
def test_golden(name, tmp_path):
    out = tmp_path / name
    assert main(CASES[name] + ["--out", str(out)]) == 0
    assert out.read_bytes() == (GOLDEN / name).read_bytes()


def test_cascade_golden_values():
    rows = [r.split(",") for r in (GOLDEN / "cascade_logistic.csv").read_text().splitlines()[1:]]
    assert abs(float(rows[0][1]) - 3) < 1e-8
    assert abs(float(rows[1][1]) - 3.449489742783178) < 1e-6
    assert abs(float(rows[4][2]) - 4.669) < 0.05 * 4.669


def test_symbolic_golden_values():
    doc = json.loads((GOLDEN / "symbolic_horseshoe.json").read_text())
    assert doc["rectangle"]["width"] == "1/27" and doc["rectangle"]["height"] == "1/9"
    assert json.loads((GOLDEN / "symbolic_cantor.json").read_text())["verdict"] == "in"


def test_validate_minimal():
    cfg = validate_config('{"command": "lyapunov", "system": {"name": "lorenz"}}')
    assert cfg.command == "lyapunov" and cfg.seed == 0
    assert cfg.output["path"] == "-"


@pytest.mark.parametrize("doc,path", [
    ({"command": "simulate", "system": {"name": "nope"}}, "/system/name"),
    ({"command": "simulate", "system": {"name": "lorenz"}, "options": {"abs_tol": -1}}, "/options/abs_tol"),
    ({"command": "simulate", "bogus": 1}, "/"),
])
def test_validate_errors(doc, path):
    with pytest.raises(SchemaViolation) as ei:
        validate_config(json.dumps(doc))
    assert ei.value.to_dict()["details"]["errors"][0]["path"] == path


def test_validate_round_trip():
    cfg = validate_config({"command": "cascade", "system": {"name": "logistic"}, "options": {"max_n": 5}})
    assert validate_config(cfg.to_json()) == cfg


def test_flags_override_config(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"command": "cascade", "system": {"name": "logistic"},
                                "options": {"max_n": 3}, "output": {"format": "json"}}))
    out = tmp_path / "o.json"
    assert main(["cascade", "--config", str(conf), "--max-n", "4", "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["lambdas"]) == 4


def test_stdout(capsys):
    assert main(["symbolic", "--mode", "itinerary", "--x", "2/3", "--n", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["symbols"] == [-1, -1, -1]


def test_exit_usage(capsys):
    assert main(["simulate", "--system", "nope"]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "SchemaViolation"


def test_exit_numeric(capsys):
    assert main(["simulate", "--system", "blowup", "--x0", "1", "--t-end", "2"]) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "StepLimitExceeded"


def test_bad_word(capsys):
    assert main(["symbolic", "--mode", "horseshoe", "--word", "+-", "--lam", "1/3", "--mu", "3"]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "InvalidWord"


def test_unknown_subcommand():
    assert main(["frobnicate"]) == 2


def test_dump_json_deterministic():
    text = dump_json({"b": 0.1, "a": [1.0 / 3.0, float("inf")]})
    assert text == dump_json({"a": [1.0 / 3.0, float("inf")], "b": 0.1})
    doc = json.loads(text)
    assert doc["a"][0] == 1.0 / 3.0 and doc["a"][1] == "inf"


def test_console_script(tmp_path):
    out = tmp_path / "c.csv"
    rc = subprocess.run([sys.executable, "-m", "dynkit.cli", *CASES["cascade_logistic.csv"], "--out", str(out)]).returncode
    assert rc == 0 and out.read_bytes() == (GOLDEN / "cascade_logistic.csv").read_bytes()
