import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from arithopt.cli import dispatch, export_plots
from arithopt.codec import load_design, save_design
from arithopt.ct import CompressorTree, validate_ct, wallace_tree
from arithopt.netlist import parse_hdl, verify_exhaustive


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "arithopt.cli", *args], capture_output=True, text=True
    )


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert dispatch(
        [
            "gen-dataset", "--kind", "ct", "--n", "4", "--count", "40",
            "--labeled", "10", "--out", str(root / "ds"), "--seed", "1",
        ]
    ) == 0
    assert dispatch(
        [
            "train", "--dataset", str(root / "ds"), "--model", "diffusion",
            "--epochs", "4", "--out", str(root / "den.pt"), "--seed", "2",
        ]
    ) == 0
    assert dispatch(
        [
            "train", "--dataset", str(root / "ds"), "--model", "predictor",
            "--epochs", "6", "--out", str(root / "pre.pt"), "--seed", "3",
        ]
    ) == 0
    assert dispatch(
        [
            "sample", "--denoiser", str(root / "den.pt"), "--predictor", str(root / "pre.pt"),
            "--count", "3", "--k", "2", "--steps", "5",
            "--out", str(root / "samples"), "--seed", "4",
        ]
    ) == 0
    return root


def test_gen_dataset_outputs_and_manifest(workspace):
    ds = workspace / "ds"
    assert (ds / "labels.csv").exists()
    assert len(list((ds / "designs").glob("*.json"))) == 40
    manifest = json.loads((ds / "manifest.json").read_text())
    assert manifest["tool"] == "arithopt" and manifest["seed"] == 1
    assert "config_hash" in manifest and "version" in manifest


def test_train_writes_loss_curve(workspace):
    rows = list(csv.DictReader(open(workspace / "den.losses.csv")))
    assert len(rows) == 4
    assert float(rows[-1]["loss"]) < float(rows[0]["loss"]) * 1.5


def test_sample_outputs_designs_and_diagnostics(workspace):
    files = sorted((workspace / "samples").glob("sample_*.json"))
    assert len(files) == 3
    rows = list(csv.DictReader(open(workspace / "samples" / "diagnostics.csv")))
    assert len(rows) == 3
    assert all(r["finite"] == "1" for r in rows)


def test_legalize_verify_evaluate_pipeline(workspace, tmp_path, capsys):
    sample = sorted((workspace / "samples").glob("sample_*.json"))[0]
    legal_path = tmp_path / "legal.json"
    assert dispatch(["legalize", "--design", str(sample), "--out", str(legal_path)]) == 0
    capsys.readouterr()
    legal = load_design(legal_path)
    assert validate_ct(legal) == []
    assert dispatch(["verify", "--design", str(legal_path)]) == 0
    out = capsys.readouterr().out
    assert json.loads(out.strip().splitlines()[-1])["ok"] is True
    assert dispatch(["evaluate", "--design", str(legal_path)]) == 0
    doc = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert doc["y"] > 0 and doc["w"] == 0.66


def test_verify_emits_hdl(workspace, tmp_path, capsys):
    design = tmp_path / "w4.json"
    save_design(wallace_tree(4), design)
    hdl = tmp_path / "w4.v"
    assert dispatch(["verify", "--design", str(design), "--hdl", str(hdl)]) == 0
    capsys.readouterr()
    assert verify_exhaustive(parse_hdl(hdl.read_text()), 4).ok


def test_verify_failure_exit_code(tmp_path, capsys):
    # an illegal tree cannot assemble: domain error, exit 1
    bad = tmp_path / "bad.json"
    save_design(CompressorTree.empty(4), bad)
    assert dispatch(["verify", "--design", str(bad)]) == 1
    capsys.readouterr()


def test_usage_error_exit_code_2():
    result = run_cli("--nonsense")
    assert result.returncode == 2
    result = run_cli("verify")  # missing required --design
    assert result.returncode == 2
    assert "usage" in (result.stderr + result.stdout).lower()


def test_missing_file_is_domain_error(capsys):
    assert dispatch(["verify", "--design", "/nonexistent/x.json"]) == 1
    capsys.readouterr()


def test_pareto_subcommand(tmp_path, capsys):
    labels = tmp_path / "labels.csv"
    with open(labels, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("design_id", "delay1", "area1", "delay2", "area2", "y"))
        writer.writerow(("a", "2", "10", "2", "10", "1.0"))
        writer.writerow(("b", "1", "9", "1", "9", "0.9"))
        writer.writerow(("c", "3", "11", "3", "11", "1.2"))
    out = tmp_path / "pareto.csv"
    assert dispatch(["pareto", "--labels", str(labels), "--out", str(out)]) == 0
    capsys.readouterr()
    rows = list(csv.DictReader(open(out)))
    assert [r["design_id"] for r in rows] == ["b"]


def test_export_plots_empty_campaign(tmp_path):
    export_plots(tmp_path / "nothing", tmp_path / "plots")
    plots = tmp_path / "plots"
    assert (plots / "pareto.csv").read_text().strip() == "design_id,delay,area,y"
    assert (plots / "rounds.csv").read_text().strip() == "phase,round,best_of_round,best_so_far"
    header = (plots / "target_sweep.csv").read_text().strip()
    assert header == "target_y,sample,y,drv_count,legal"
    header = (plots / "strength_sweep.csv").read_text().strip()
    assert header == "strength,sample,y,drv_count,legal"


def test_export_plots_from_campaign(tmp_path):
    from arithopt.campaign import CampaignConfig, run_campaign

    cfg = CampaignConfig.desk_scale(
        n=4, rounds=1, samples_per_round=10, labeled_per_round=4,
        unlabeled_init=40, labeled_init=12, train_epochs=4, predictor_epochs=8,
        fine_tune_epochs=2, steps=6, reflect_steps=2, seed=21, phases=("ct",),
    )
    run_campaign(cfg, tmp_path / "camp")
    export_plots(tmp_path / "camp", tmp_path / "plots")
    pareto = list(csv.DictReader(open(tmp_path / "plots" / "pareto.csv")))
    assert pareto, "campaign archive should export at least one point"
    for p in pareto:
        for q in pareto:
            if p is q:
                continue
            strictly = float(q["delay"]) < float(p["delay"]) or float(q["area"]) < float(p["area"])
            dominated = (
                float(q["delay"]) <= float(p["delay"])
                and float(q["area"]) <= float(p["area"])
                and strictly
            )
            assert not dominated
    rounds = list(csv.DictReader(open(tmp_path / "plots" / "rounds.csv")))
    assert len(rounds) == 1 and rounds[0]["phase"] == "ct"


def test_reproducible_outputs(tmp_path):
    for sub in ("a", "b"):
        assert dispatch(
            [
                "gen-dataset", "--kind", "prefix", "--n", "8", "--count", "30",
                "--labeled", "8", "--out", str(tmp_path / sub), "--seed", "7",
            ]
        ) == 0
    a = (tmp_path / "a" / "labels.csv").read_bytes()
    b = (tmp_path / "b" / "labels.csv").read_bytes()
    assert a == b
    for f in sorted((tmp_path / "a" / "designs").glob("*.json")):
        assert f.read_bytes() == (tmp_path / "b" / "designs" / f.name).read_bytes()


def test_verify_corrupted_hdl_reports_counterexample(tmp_path, capsys):
    from arithopt.netlist import assemble_multiplier, emit_hdl

    text = emit_hdl(assemble_multiplier(wallace_tree(4)))
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if line.lstrip().startswith("FA "):
            # swap the sum and carry connections of one full adder
            import re

            sum_wire = re.search(r"\.sum\((\w+)\)", line).group(1)
            cout_wire = re.search(r"\.cout\((\w+)\)", line).group(1)
            line = line.replace(f".sum({sum_wire})", f".sum({cout_wire}§)")
            line = line.replace(f".cout({cout_wire})", f".cout({sum_wire})")
            lines[i] = line.replace("§", "")
            break
    bad = tmp_path / "bad.v"
    bad.write_text("\n".join(lines) + "\n")
    assert dispatch(["verify", "--hdl-in", str(bad), "--n", "4"]) == 1
    out = capsys.readouterr().out
    doc = json.loads(out.strip().splitlines()[-1])
    assert doc["ok"] is False
    ce = doc["counterexample"]
    assert ce["got"] != ce["expected"] == ce["a"] * ce["b"]
