import csv
import io
import json
import pathlib

import numpy as np
import pytest

from cpsflow import cli, lti
from cpsflow.config import load_lti
from cpsflow.report import EXIT_BUDGET, EXIT_OK, EXIT_VIOLATED

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / "configs"


def run_cli(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def records(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def matrix(recs, attacker):
    cells = {}
    for rec in recs:
        if rec["attacker"] == attacker:
            cells.update({k: v["reachable"] for k, v in rec["vulnerabilities"].items()})
    return cells


def test_alpha2_row_and_exit_code(capsys):
    code, out, _ = run_cli(capsys, "analyze", "--model", "two-tank-v1", "--attacker", "alpha2",
                           "--format", "csv")
    row = next(csv.DictReader(io.StringIO(out)))
    assert code == EXIT_VIOLATED
    assert [row[c] for c in ("E1", "E2", "F1", "F2")] == ["no", "yes", "no", "yes"]
    assert row["integrity"] == "violated"


def test_fairness_alpha3_row(capsys):
    """Expected row under the fairness controller: E1 yes, E2 no, F1 yes, F2 no."""
    _, out, _ = run_cli(capsys, "analyze", "--model", "two-tank-fair", "--attacker", "alpha3",
                        "--format", "json-lines")
    assert matrix(records(out), "alpha3") == {"E1": "yes", "E2": "no", "F1": "yes", "F2": "no"}


def test_baseline_holds(capsys):
    code, out, _ = run_cli(capsys, "analyze", "--model", "two-tank-v1", "--attacker", "baseline",
                           "--format", "json-lines")
    assert code == EXIT_OK
    for rec in records(out):
        assert rec["integrity"]["status"] == "holds"
        assert rec["complete"] == "yes"


def test_table_layout(capsys):
    code, out, _ = run_cli(capsys, "analyze", "--model", "two-tank-v1", "--attacker", "alpha2")
    header, row = out.splitlines()[1:3]
    assert header.split()[:5] == ["attacker", "k", "loop", "y1", "y2"]
    assert row.split()[-5:] == ["✗", "✓", "✗", "✓", "violated@3"]


def test_reports_are_byte_identical(capsys, tmp_path):
    outs = []
    for n in range(2):
        path = tmp_path / f"r{n}.jsonl"
        run_cli(capsys, "analyze", "--model", "two-tank-fair", "--attacker", "alpha3",
                "--attacker", "alpha2", "--format", "json-lines", "--out", path)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] and outs[0]


def test_json_embeds_witnesses(capsys):
    _, out, _ = run_cli(capsys, "analyze", "--model", "two-tank-v1", "--attacker", "alpha1",
                        "--format", "json-lines")
    recs = records(out)
    assert {r["variable"] for r in recs} == {"y1", "y2"}
    for rec in recs:
        for name, cell in rec["vulnerabilities"].items():
            assert cell["reachable"] == "yes"
            states = cell["trace"]["states"]
            assert states[-1] == cell["state"] and len(states) == cell["layer"] + 1
        w = rec["integrity"]["witness"]
        a, b = w["first"]["states"][-1], w["second"]["states"][-1]
        assert (a["y1"], a["y2"]) != (b["y1"], b["y2"])


def test_declared_attacker_matches_builtin(capsys, tmp_path):
    conf = tmp_path / "spoof.toml"
    conf.write_text('[model]\nfixture = "two-tank-v1"\n\n'
                    '[attacker.spoof]\ndomain = { i2 = [0, 100] }\n\n[analysis]\nformat = "csv"\n')
    _, mine, _ = run_cli(capsys, "analyze", conf)
    _, builtin, _ = run_cli(capsys, "analyze", "--model", "two-tank-v1", "--attacker", "alpha2",
                            "--format", "csv")
    assert mine.splitlines()[1].split(",")[1:] == builtin.splitlines()[1].split(",")[1:]


@pytest.mark.parametrize("body,needle", [
    ('[model]\nfixture = "two-tank-v1"\ncolour = "red"\n', "colour"),
    ('[model]\nfixture = "three-tank"\n', "three-tank"),
    ('[model]\nfixture = "two-tank-v1"\n[attacker.x]\ndomain = { i2 = [0, 500] }\n', "attacker.x"),
    ('[model]\nfixture = "two-tank-v1"\n[attacker.x]\ndomain = { z9 = [0] }\n', "attacker.x"),
    ('[model]\nfixture = "two-tank-v1"\n[analysis]\nk = -3\n', "analysis.k"),
    ('[model]\nfixture = "two-tank-v1"\npath = "x.toml"\n', "exactly one"),
    ('[model\nfixture = 1\n', "line 1"),
    ('[lti]\nA = [[1.0]]\n', "lti"),
])
def test_config_errors_exit_one(capsys, tmp_path, body, needle):
    conf = tmp_path / "bad.toml"
    conf.write_text(body)
    verb = "simulate" if body.startswith("[lti]") else "analyze"
    code, out, err = run_cli(capsys, verb, conf)
    assert code == 1 and out == ""
    assert needle in err


def test_unknown_cli_attacker(capsys):
    code, _, err = run_cli(capsys, "analyze", "--model", "two-tank-v1", "--attacker", "nobody")
    assert code == 1 and "nobody" in err


def test_budget_exhaustion_exit_code(capsys):
    code, out, _ = run_cli(capsys, "analyze", "--model", "two-tank-v1", "--attacker", "alpha2",
                           "--budget", "5", "--format", "csv")
    row = next(csv.DictReader(io.StringIO(out)))
    assert code == EXIT_BUDGET and row["complete"] == "no" and row["integrity"] == "unknown"


def test_compare_same_model_is_empty(capsys):
    code, out, _ = run_cli(capsys, "compare", "--model", "two-tank-v1", "--attacker", "alpha2")
    assert code == EXIT_OK and out.rstrip().endswith("no differences")


def test_compare_alpha1_keeps_matrix(capsys):
    _, out, _ = run_cli(capsys, "compare", "--model", "two-tank-v1", "--attacker", "alpha1",
                        "--controllers", "original", "fairness", "--format", "json-lines")
    assert not [d for d in records(out) if d["item"] in ("E1", "E2", "F1", "F2")]


def test_compare_alpha3_shrinks_y2(capsys):
    """Fairness bounds the y2 hull below by r2^- - v2 while the original allows 0."""
    from conftest import scenario
    fair = scenario("two-tank-fair")
    expected = [fair.band.lo[1] - fair.config.v2, fair.band.hi[1]]
    _, out, _ = run_cli(capsys, "compare", "--model", "two-tank-v1", "--attacker", "alpha3",
                        "--controllers", "original", "fairness", "--format", "json-lines")
    diffs = {d["item"]: d for d in records(out)}
    assert "y2" in diffs and diffs["y2"]["reduced"] == "yes"
    assert diffs["y2"]["after"] == expected


def test_simulate_zero_noise_no_alarms(capsys):
    code, out, err = run_cli(capsys, "simulate", CONFIGS / "lti_quiet.toml")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1000 and all(r["alarm1"] == "0" and float(r["r1"]) == 0.0 for r in rows)
    assert "alarms 0" in err


def test_simulate_calibrated_rate(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "simulate", CONFIGS / "lti_calibration.toml", "--out",
                           tmp_path / "t.csv")
    rates = [float(line.rsplit(" ", 1)[1]) for line in out.splitlines() if line.startswith("sensor")]
    assert code == EXIT_OK and len(rates) == 2
    assert all(0.04 <= r <= 0.06 for r in rates)
    assert "A* 0.05" in out


def test_simulate_bias_onset_within_horizon(capsys, tmp_path):
    conf = load_lti(CONFIGS / "lti_bias.toml")
    path = tmp_path / "b.csv"
    run_cli(capsys, "simulate", CONFIGS / "lti_bias.toml", "--out", path)
    rows = list(csv.DictReader(path.open()))
    system = lti.LtiSystem(conf.A, conf.B, conf.C, conf.R1, conf.R2)
    horizon = lti.settling_horizon(system, conf.L)
    start = conf.attack.start
    window = [r for r in rows if start <= int(r["step"]) <= start + horizon]
    assert any(r["alarm1"] == "1" for r in window)
    late = [r for r in rows if int(r["step"]) >= start + horizon]
    assert all(r["alarm1"] == "1" for r in late)


def test_simulate_seed_flag_changes_and_replays(capsys):
    _, a, _ = run_cli(capsys, "simulate", CONFIGS / "lti_bias.toml", "--steps", "50", "--seed", "3")
    _, b, _ = run_cli(capsys, "simulate", CONFIGS / "lti_bias.toml", "--steps", "50", "--seed", "3")
    _, c, _ = run_cli(capsys, "simulate", CONFIGS / "lti_bias.toml", "--steps", "50", "--seed", "4")
    assert a == b and a != c


def test_fixtures_list(capsys):
    code, out, _ = run_cli(capsys, "fixtures", "list")
    names = [line.split()[0] for line in out.splitlines()]
    assert code == EXIT_OK and {"two-tank-v1", "two-tank-fair", "single-tank"} <= set(names)
