from __future__ import annotations

import json
import subprocess
import sys

import pytest

from reviewcoin.cli import main
from reviewcoin.tax_model import neurips_db_schedule


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def schedule_file(tmp_path):
    return _write(tmp_path / "sched.json", {**neurips_db_schedule().to_dict(), "rho": 3, "n": 2800})


@pytest.fixture
def scenario_file(tmp_path):
    return _write(
        tmp_path / "scenario.json",
        {"population": [{"count": 15, "profile": {}}], "cycles": 2, "rng_seed": 3},
    )


def test_tax_reproduces_outlay(schedule_file, capsys):
    assert main(["tax", "--schedule", schedule_file]) == 0
    assert capsys.readouterr().out.strip() == (
        "tau=1.125 RC, rounded=1.000 RC, cost(rho=3)=4.000 RC, outlay(n=2800)=11200.000 RC"
    )


def test_tax_flags_override_file(schedule_file, capsys):
    main(["tax", "--schedule", schedule_file, "--rho", "5", "--n", "1", "--tau-policy", "exact"])
    assert "cost(rho=5)=6.125 RC, outlay(n=1)=6.125 RC" in capsys.readouterr().out


def test_tax_empty_schedule(tmp_path, capsys):
    assert main(["tax", "--schedule", _write(tmp_path / "e.json", {})]) == 0
    assert capsys.readouterr().out.startswith("tau=0.000 RC")


@pytest.mark.parametrize("content", ["not json", "[1, 2]", '{"roles": [{"role_name": "x"}]}'])
def test_tax_malformed_schedule(tmp_path, content):
    path = tmp_path / "bad.json"
    path.write_text(content)
    assert main(["tax", "--schedule", str(path)]) == 1


def test_missing_file_is_usage_error(tmp_path):
    assert main(["tax", "--schedule", str(tmp_path / "nope.json")]) == 2
    assert main(["ledger", "verify", str(tmp_path / "nope.jsonl")]) == 2
    assert main(["simulate", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["tax", "--schedule", "x", "--bogus"])
    assert info.value.code == 2


def test_simulate_writes_reports(scenario_file, tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", "--scenario", scenario_file, "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["summary"]["audit"] == {"supply_conserved": True, "chain_verified": True}
    rows = (out / "cycles.csv").read_text().splitlines()
    assert rows[0] == "cycle,submissions,blocked,reviews_paid,challenges_upheld,defaults,treasury_mRC,supply_mRC,gini"
    assert len(rows) == 3
    assert main(["ledger", "verify", str(out / "ledger.jsonl")]) == 0


def test_simulate_is_byte_identical(scenario_file, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["simulate", "--scenario", scenario_file, "--out", str(a)])
    main(["simulate", "--scenario", scenario_file, "--out", str(b)])
    for name in ("report.json", "cycles.csv", "ledger.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_rc_seed_overrides_scenario(scenario_file, tmp_path, monkeypatch):
    main(["simulate", "--scenario", scenario_file, "--out", str(tmp_path / "a")])
    monkeypatch.setenv("RC_SEED", "12345")
    main(["simulate", "--scenario", scenario_file, "--out", str(tmp_path / "b")])
    report = json.loads((tmp_path / "b" / "report.json").read_text())
    assert report["scenario"]["rng_seed"] == 12345
    monkeypatch.setenv("RC_SEED", "twelve")
    assert main(["simulate", "--scenario", scenario_file, "--out", str(tmp_path / "c")]) == 2


def test_simulate_bad_scenario(tmp_path):
    path = _write(tmp_path / "s.json", {"population": []})
    assert main(["simulate", "--scenario", path, "--out", str(tmp_path / "o")]) == 1


def test_ledger_verify_detects_tamper(scenario_file, tmp_path, capsys):
    out = tmp_path / "out"
    main(["simulate", "--scenario", scenario_file, "--out", str(out)])
    lines = (out / "ledger.jsonl").read_text().splitlines()
    obj = json.loads(lines[29])
    obj["entries"][0][1] -= 1
    obj["entries"][1][1] += 1
    lines[29] = json.dumps(obj, separators=(",", ":"), ensure_ascii=False)
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert main(["ledger", "verify", str(bad)]) == 1
    assert "seq 30" in capsys.readouterr().out


def test_ledger_verify_empty(tmp_path, capsys):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert main(["ledger", "verify", str(path)]) == 0
    assert "0 transactions" in capsys.readouterr().out


def test_ledger_show(scenario_file, tmp_path, capsys):
    out = tmp_path / "out"
    main(["simulate", "--scenario", scenario_file, "--out", str(out)])
    capsys.readouterr()
    assert main(["ledger", "show", str(out / "ledger.jsonl")]) == 0
    assert capsys.readouterr().out.splitlines()[0].split()[:2] == ["1", "Mint"]
    assert main(["ledger", "show", str(out / "ledger.jsonl"), "--account", "r0000"]) == 0
    assert capsys.readouterr().out.splitlines()[-1].startswith("r0000: ")


def test_bootstrap_plan(tmp_path, capsys):
    hist = _write(tmp_path / "h.json", [{"account": "a", "reviews": 3}, {"account": "b", "reviews": 3}])
    assert main(["bootstrap", "plan", "--history", hist, "--n", "1", "--rho", "1", "--tau", "0"]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["sigma_mRC"] == 2000
    assert plan["phase1_grants"] == [
        {"account": "a", "amount_mRC": 500},
        {"account": "b", "amount_mRC": 500},
    ]


def test_bootstrap_plan_with_free_work_and_schedule(tmp_path, capsys):
    hist = _write(
        tmp_path / "h.json",
        {
            "schedule": {"roles": [{"role_name": "Chair", "per_paper_rate": 500}]},
            "records": [{"account": "a", "reviews": 1, "roles": {"Chair": 2}}],
            "free_work": [{"account": "b", "reviews": 5}],
        },
    )
    main(["bootstrap", "plan", "--history", hist, "--n", "1", "--rho", "1", "--tau", "0"])
    plan = json.loads(capsys.readouterr().out)
    assert plan["top_up_mRC"] == 4000


def test_bootstrap_plan_empty_history(tmp_path):
    hist = _write(tmp_path / "h.json", [])
    assert main(["bootstrap", "plan", "--history", hist, "--n", "1", "--rho", "1", "--tau", "0"]) == 1


def test_module_entry_point(schedule_file):
    proc = subprocess.run(
        [sys.executable, "-m", "reviewcoin", "tax", "--schedule", schedule_file],
        capture_output=True,
        text=True,
        check=True,
    )
    assert "outlay(n=2800)=11200.000 RC" in proc.stdout


def test_bundled_data_files_are_valid(capsys):
    from pathlib import Path

    from reviewcoin.simulator import ScenarioConfig

    data = Path(__file__).resolve().parent.parent / "data"
    for path in data.glob("scenario_*.json"):
        ScenarioConfig.from_dict(json.loads(path.read_text()))
    assert main(["tax", "--schedule", str(data / "neurips_db_schedule.json")]) == 0
    hist = str(data / "history_example.json")
    assert main(["bootstrap", "plan", "--history", hist, "--n", "100", "--rho", "3", "--tau", "1125"]) == 0
