from __future__ import annotations

import json
from pathlib import Path

import pytest

from ambiswitch.cli import EXIT_INVALID, EXIT_IO, EXIT_OK, EXIT_SOLVER, main
from ambiswitch.io import read_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def cfg(name):
    return str(CONFIGS / f"{name}.json")


def test_validate_exit_codes(capsys):
    assert main(["validate", cfg("fund_selection")]) == EXIT_OK
    assert main(["validate", cfg("free_loop")]) == EXIT_INVALID
    out = capsys.readouterr().out
    assert "non_free_loop witness" in out and "[1, 2, 1]" in out


def test_validate_report_file(tmp_path):
    out = tmp_path / "v.json"
    assert main(["validate", cfg("buy_low"), "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["ok"] and doc["provenance"]["command"] == "validate"


def test_missing_file_and_bad_schema(tmp_path):
    assert main(["validate", str(tmp_path / "none.json")]) == EXIT_IO
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"regimes": 1}))
    assert main(["solve", str(bad)]) == EXIT_IO


def test_funds_summary(capsys):
    assert main(["solve", cfg("fund_selection"), "--method", "funds", "--nx", "401"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "K1=61.53846, K2=160, type=TwoWayThresholds" in out


def test_incompatible_method():
    assert main(["solve", cfg("fund_selection"), "--method", "smoothfit"]) == EXIT_INVALID
    assert main(["solve", cfg("buy_low"), "--method", "funds"]) == EXIT_INVALID


def test_smoothfit_json(tmp_path):
    out = tmp_path / "s.json"
    assert main(["solve", cfg("buy_low_kappa"), "--method", "smoothfit", "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert all(c["ok"] for c in doc["conditions"].values())
    assert doc["x1"] < doc["x2"]


def test_pde_zero_reward_surface(tmp_path):
    out = tmp_path / "z.csv"
    assert main(["solve", cfg("zero_reward"), "--format", "csv", "--out", str(out), "--nx", "51", "--nt",
                 "10"]) == EXIT_OK
    header, rows = read_csv(out)
    assert header == ["t", "x", "regime", "value", "binding"]
    assert len(rows) == 11 * 2 * 51
    assert all(float(r[3]) == 0.0 for r in rows)


def test_missing_root_exit_code(tmp_path):
    doc = json.loads(Path(cfg("buy_low")).read_text())
    doc["kappa"] = [5.0, 5.0]
    p = tmp_path / "k5.json"
    p.write_text(json.dumps(doc))
    assert main(["solve", str(p), "--method", "smoothfit"]) == EXIT_SOLVER


def test_sweep_two_steps(tmp_path):
    out = tmp_path / "sw.csv"
    assert main(["sweep", cfg("buy_low"), "--method", "smoothfit", "--from", "0", "--to", "0.2", "--steps", "2",
                 "--out", str(out)]) == EXIT_OK
    header, rows = read_csv(out)
    assert header[0] == "kappa" and len(rows) == 2
    assert all(r[-1] == "ok" for r in rows)
    assert out.read_text().startswith("# provenance: ")


def test_sweep_records_failed_points(tmp_path):
    out = tmp_path / "sw.json"
    assert main(["sweep", cfg("buy_low"), "--method", "smoothfit", "--from", "0", "--to", "5", "--steps", "3",
                 "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    status = [r[-1] for r in doc["rows"]]
    assert status[0] == "ok" and status[-1].startswith("error")


def test_sweep_rejects_single_step():
    assert main(["sweep", cfg("buy_low"), "--from", "0", "--to", "1", "--steps", "1"]) == EXIT_INVALID


def test_simulate_annuity_and_determinism(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"sim{k}.json"
        assert main(["simulate", cfg("annuity"), "--strategy", "from-solve", "--x0", "0.3", "--paths", "500",
                     "--seed", "7", "--nx", "101", "--out", str(out)]) == EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    doc = json.loads(outs[0])
    assert doc["report"]["mean"] == pytest.approx(2.0, rel=1e-9)


def test_simulate_bad_regime():
    assert main(["simulate", cfg("annuity"), "--x0", "0", "--regime", "3"]) == EXIT_INVALID


def test_plot(tmp_path):
    csv_path = tmp_path / "sw.csv"
    main(["sweep", cfg("buy_low"), "--method", "smoothfit", "--from", "0", "--to", "0.3", "--steps", "4",
          "--out", str(csv_path)])
    svg = tmp_path / "p.svg"
    assert main(["plot", "--in", str(csv_path), "--x", "kappa", "--y", "x1,x2", "--out", str(svg)]) == EXIT_OK
    text = svg.read_text()
    assert text.count('class="series"') == 2 and "<metadata>" in text
    log_svg = tmp_path / "log.svg"
    assert main(["plot", "--in", str(csv_path), "--x", "kappa", "--y", "C1", "--y", "C2", "--logy",
                 "--out", str(log_svg)]) == EXIT_OK
    assert "1e" in log_svg.read_text()
    assert main(["plot", "--in", str(csv_path), "--x", "kappa", "--y", "nope", "--out", str(svg)]) == EXIT_IO
