import json
import math
import pathlib
import subprocess
import sys

import pytest

from exchange_entropy.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from exchange_entropy.config import load_config, run_scenario, series_csv, validate
from exchange_entropy.exceptions import ConfigError

CONFIGS = pathlib.Path(__file__).resolve().parents[1] / "configs"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_minimal_scenario_log_z(capsys):
    code, out, _ = run(["simulate", "--config", CONFIGS / "minimal.json"], capsys)
    assert code == EXIT_OK
    report = json.loads(out)
    validate(report, "report")
    step = report["replicas"][0]["steps"][0]
    assert step["log_z"] == pytest.approx(math.log(10.0), rel=1e-15)


def test_financial_contact_raises_log_z(capsys):
    code, out, _ = run(["simulate", "--config", CONFIGS / "financial_contact.json", "--replicas", "1"], capsys)
    assert code == EXIT_OK
    steps = json.loads(out)["replicas"][0]["steps"]
    fc = next(s for s in steps if s["action"] == "financial_contact")
    assert fc["delta_log_z"] > 0 and fc["money_inflow"] > 0
    assert fc["delta_log_z_integral"] == pytest.approx(fc["delta_log_z"], rel=1e-8)


def test_two_part_scenario_runs():
    report, rows = run_scenario(load_config(CONFIGS / "two_part_contact.json"))
    assert report["ok"]
    actions = [s["action"] for s in report["replicas"][0]["steps"]]
    assert actions == ["initial", "make_contact", "simulate", "break_contact", "add_money"]
    assert series_csv(rows).startswith("replica,step,action,event,time,quantity,total")


def test_reruns_are_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        code, _, _ = run(["simulate", "--config", CONFIGS / "financial_contact.json", "--out", tmp_path / d,
                          "--replicas", "1", "--format", "both"], capsys)
        assert code == EXIT_OK
    for name in ("report.json", "report_series.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_changes_output(capsys):
    _, a, _ = run(["simulate", "--config", CONFIGS / "financial_contact.json", "--replicas", "1"], capsys)
    _, b, _ = run(["simulate", "--config", CONFIGS / "financial_contact.json", "--replicas", "1",
                   "--seed", "99"], capsys)
    assert json.loads(a)["seed"] != json.loads(b)["seed"]
    assert a != b


def test_config_error_names_the_field(tmp_path, capsys):
    doc = json.loads((CONFIGS / "minimal.json").read_text())
    doc["economy"]["population"][0]["utility"]["exponents"] = [1.0, -2.0]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, _, err = run(["simulate", "--config", bad], capsys)
    assert code == EXIT_CONFIG
    assert "/economy/population/0/utility/exponents" in err


def test_config_error_path_for_missing_key():
    with pytest.raises(ConfigError) as info:
        load_config({"economy": {"goods": ["money"], "population": []}})
    assert info.value.path == "/" and "seed" in str(info.value)
    with pytest.raises(ConfigError) as info:
        load_config({"seed": 1, "economy": {"goods": ["money"], "population": []}, "initial": {"totals": []}})
    assert info.value.path == "/initial/totals"


def test_entropy_command(capsys):
    code, out, _ = run(["entropy", "--family", "complements", "--alpha", "2", "--agents", "10",
                        "--totals", "15,15"], capsys)
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["order"] == "extensive"
    assert doc["beta"] == pytest.approx(1.0, rel=1e-9)


def test_legendre_command(capsys):
    code, out, _ = run(["legendre", "--family", "complements", "--alpha", "2", "--agents", "10",
                        "--totals", "15,15"], capsys)
    assert code == EXIT_OK
    assert json.loads(out)["entropy"] == pytest.approx(30 - 10 * math.log(2), rel=1e-10)


def test_plan_command(capsys):
    base = ["plan", "--agents", "10", "--exponents", "2,2"]
    code, out, _ = run(base + ["--from", "20,20", "--to", "25,20"], capsys)
    assert code == EXIT_OK
    steps = json.loads(out)["steps"]
    assert [s["action"] for s in steps] == ["add_money"]
    code, _, err = run(base + ["--from", "25,20", "--to", "20,20"], capsys)
    assert code == EXIT_RUNTIME and "PlanningError" in err


def test_usage_errors_exit_config(capsys):
    code, _, err = run(["entropy", "--agents", "3", "--totals", "1,1"], capsys)
    assert code == EXIT_CONFIG and "--exponents" in err
    with pytest.raises(SystemExit) as info:
        main(["entropy", "--agents", "3"])
    assert info.value.code == EXIT_CONFIG


def test_axioms_command_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "suite.json"
    cfg.write_text(json.dumps({"monotonicity_scenarios": 1, "n_agents": 20}))
    code, out, _ = run(["axioms", "--config", cfg, "--out", tmp_path], capsys)
    assert code == EXIT_OK and "overall: pass" in out
    report = json.loads((tmp_path / "axioms.json").read_text())
    validate(report, "axioms-report")
    code, out, _ = run(["axioms", "--config", cfg, "--inject-wrong-sign"], capsys)
    assert code == EXIT_CHECK and "overall: fail" in out


def test_axioms_rejects_unknown_option(tmp_path, capsys):
    cfg = tmp_path / "suite.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _, err = run(["axioms", "--config", cfg], capsys)
    assert code == EXIT_CONFIG and "/bogus" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "exchange_entropy", "entropy", "--agents", "2",
                           "--exponents", "1", "--totals", "10"], capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["log_z"] == pytest.approx(math.log(10.0))
