import json
import os

import numpy as np
import pytest

from sorsa.cli import main
from sorsa.linalg import save_matrix_csv


def write_configs(tmp_path):
    task = tmp_path / "task.json"
    task.write_text('{"kind": "teacher_student", "seed": 2}\n')
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"eta_max": 0.05, "gamma": 0.05, "total_steps": 25, "seed": 2}\n')
    return str(task), str(cfg)


def test_train_subcommand_writes_outputs(tmp_path, capsys):
    task, cfg = write_configs(tmp_path)
    out = tmp_path / "run"
    code = main(["train", "--method", "sorsa", "--task", task, "--config", cfg,
                 "--out", str(out)])
    assert code == 0
    summary = json.loads(capsys.readouterr().out.strip())
    assert "final_train_loss" in summary and "final_kappa" in summary
    names = os.listdir(out)
    assert any(n.startswith("manifest-") for n in names)
    assert any(n.startswith("trace-sorsa-") for n in names)
    assert any(n.startswith("checkpoint-sorsa-") for n in names)
    assert any(n.startswith("final-weight-sorsa-") for n in names)


def test_twin_subcommand_reports_summary(tmp_path, capsys):
    task, cfg = write_configs(tmp_path)
    out = tmp_path / "twin"
    assert main(["twin", "--task", task, "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out.strip())
    assert summary["weyl_violations"] == 0
    assert len(os.listdir(out)) == 5  # manifest + 2 analysis + 2 trace files


def test_compare_subcommand(tmp_path, capsys):
    task, cfg = write_configs(tmp_path)
    out = tmp_path / "cmp"
    code = main(["compare", "--methods", "sorsa,lora", "--task", task,
                 "--config", cfg, "--out", str(out)])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    assert {json.loads(line)["method"] for line in lines} == {"sorsa", "lora"}
    assert any(n.startswith("results-") for n in os.listdir(out))


def test_analyze_subcommand(tmp_path, capsys):
    gen = np.random.default_rng(0)
    w0 = gen.standard_normal((6, 5))
    wt = w0 + 0.1 * gen.standard_normal((6, 5))
    p0, pt = tmp_path / "w0.csv", tmp_path / "wt.csv"
    save_matrix_csv(p0, w0)
    save_matrix_csv(pt, wt)
    assert main(["analyze", "--checkpoint0", str(p0), "--checkpointT", str(pt)]) == 0
    summary = json.loads(capsys.readouterr().out.strip())
    assert summary["delta_sigma"] > 0.0
    assert 0.0 <= summary["delta_d"] <= 1.0


def test_verify_subcommand_prints_status_lines(capsys):
    assert main(["verify", "--suite", "svd"]) == 0
    out = capsys.readouterr().out
    assert "[PASS] C1 svd-correctness" in out


def test_verify_rejects_unknown_suite():
    with pytest.raises(SystemExit):
        main(["verify", "--suite", "everything"])


def test_default_configs_are_used_when_omitted(tmp_path, capsys):
    out = tmp_path / "dflt"
    cfg = tmp_path / "short.json"
    cfg.write_text('{"total_steps": 5, "eta_max": 0.05}\n')
    assert main(["train", "--method", "full", "--config", str(cfg), "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out.strip())
    assert np.isfinite(summary["final_train_loss"])
