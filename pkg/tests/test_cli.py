import csv
import json
import subprocess
import sys

from pairrank.cli import main


def run_cli(*argv):
    return main([str(a) for a in argv])


def pipeline_args(manifest_dir, out, *extra):
    return ["--manifest", manifest_dir / "manifest.json", "--out", out, *extra]


def test_ingest_summary_and_warning(manifest_dir, capsys):
    code = run_cli("ingest", *pipeline_args(manifest_dir, manifest_dir / "out"))
    captured = capsys.readouterr()
    assert code == 0
    assert "cycle 20B: N=3" in captured.out
    assert "cycle 21A: N=2" in captured.out
    assert "P-404" in captured.err  # dangling publication link warned, not fatal


def test_ingest_missing_manifest_nonzero_exit(tmp_path, capsys):
    code = run_cli("ingest", "--manifest", tmp_path / "absent.json")
    captured = capsys.readouterr()
    assert code == 1
    assert "absent.json" in captured.err


def test_judge_rank_evaluate_similarity_report_pipeline(manifest_dir, capsys, tmp_path):
    out = tmp_path / "out"
    common = pipeline_args(manifest_dir, out, "--seed", "7")

    assert run_cli("judge", *common) == 0
    captured = capsys.readouterr()
    assert "cycle 20B: 3 pairs (0 cached, 3 judged)" in captured.out
    assert (out / "20B" / "comparisons.jsonl").exists()
    assert (out / "21A" / "comparisons.jsonl").exists()

    # warm rerun judges nothing
    assert run_cli("judge", *common) == 0
    captured = capsys.readouterr()
    assert "cycle 20B: 3 pairs (3 cached, 0 judged)" in captured.out

    assert run_cli("rank", *common) == 0
    captured = capsys.readouterr()
    assert "ranked 3 proposals" in captured.out
    ranks_csv = out / "20B" / "ranks.csv"
    with open(ranks_csv) as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 3
    assert {row["proposal_id"] for row in rows} == {"P-001", "P-002", "P-003"}

    assert run_cli("evaluate", *common, "--fractions", "0.0,0.34") == 0
    captured = capsys.readouterr()
    assert (out / "evaluation.json").exists()
    assert (out / "rho_curves.csv").exists()
    eval_doc = json.loads((out / "20B" / "eval.json").read_text())
    assert eval_doc["cycle_id"] == "20B"
    assert eval_doc["rho_curve"][0]["excluded_fraction"] == 0.0

    assert run_cli("similarity", *common, "--embed-dims", "16", "--threshold", "0.99") == 0
    assert (out / "20B" / "similarity.csv").exists()
    assert (out / "inter_20B_21A.csv").exists()

    assert run_cli("cost", *pipeline_args(manifest_dir, out)) == 0
    captured = capsys.readouterr()
    assert "11,935" in captured.out
    assert "823" in captured.out
    assert "346" in captured.out
    assert (out / "cost_curve.csv").exists()

    assert run_cli("report", *pipeline_args(manifest_dir, out)) == 0
    report = json.loads((out / "report.json").read_text())
    assert "20B" in report["evaluation"]["cycles"]
    assert report["cost"]["crossover"] > 10_000


def test_simulated_pipeline_is_deterministic(manifest_dir, tmp_path):
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        common = pipeline_args(manifest_dir, out, "--seed", "3")
        assert run_cli("judge", *common) == 0
        assert run_cli("rank", *common) == 0
        assert run_cli("evaluate", *common) == 0
        outputs.append(
            {
                "cache": (out / "20B" / "comparisons.jsonl").read_bytes(),
                "scores": (out / "20B" / "scores.csv").read_bytes(),
                "ranks": (out / "20B" / "ranks.csv").read_bytes(),
                "eval": (out / "evaluation.json").read_bytes(),
            }
        )
    assert outputs[0] == outputs[1]


def test_commands_idempotent_over_unchanged_inputs(manifest_dir, tmp_path):
    out = tmp_path / "out"
    common = pipeline_args(manifest_dir, out, "--seed", "3")
    for cmd in ("judge", "rank", "evaluate"):
        assert run_cli(cmd, *common) == 0
    snapshot = {
        p.relative_to(out): p.read_bytes()
        for p in sorted(out.rglob("*"))
        if p.is_file() and p.name != "run_meta.json"
    }
    for cmd in ("judge", "rank", "evaluate"):
        assert run_cli(cmd, *common) == 0
    after = {
        p.relative_to(out): p.read_bytes()
        for p in sorted(out.rglob("*"))
        if p.is_file() and p.name != "run_meta.json"
    }
    assert snapshot == after


def test_rank_without_cache_names_judge(manifest_dir, tmp_path, capsys):
    code = run_cli("rank", *pipeline_args(manifest_dir, tmp_path / "fresh"))
    captured = capsys.readouterr()
    assert code == 1
    assert "judge" in captured.err


def test_report_without_evaluation_names_evaluate(manifest_dir, tmp_path, capsys):
    code = run_cli("report", *pipeline_args(manifest_dir, tmp_path / "fresh"))
    captured = capsys.readouterr()
    assert code == 1
    assert "evaluate" in captured.err


def test_evaluate_without_human_scores_fails(tmp_path, capsys):
    docs = tmp_path / "docs"
    docs.mkdir()
    for pid in ("X1", "X2"):
        (docs / f"{pid}.md").write_text(f"text {pid}", encoding="utf-8")
    manifest = {
        "cycles": [
            {
                "cycle_id": "C",
                "proposals": [
                    {"proposal_id": "X1", "path": "docs/X1.md"},
                    {"proposal_id": "X2", "path": "docs/X2.md"},
                ],
            }
        ]
    }
    (tmp_path / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
    out = tmp_path / "out"
    assert run_cli("judge", "--manifest", tmp_path / "manifest.json", "--out", out) == 0
    code = run_cli("evaluate", "--manifest", tmp_path / "manifest.json", "--out", out)
    captured = capsys.readouterr()
    assert code == 1
    assert "human" in captured.err


def test_unknown_cycle_flag_errors(manifest_dir, tmp_path, capsys):
    code = run_cli(
        "judge", *pipeline_args(manifest_dir, tmp_path / "out"), "--cycle", "nope"
    )
    captured = capsys.readouterr()
    assert code == 1
    assert "nope" in captured.err


def test_config_file_with_flag_override(manifest_dir, tmp_path, capsys):
    out = tmp_path / "out"
    config = {
        "manifest": str(manifest_dir / "manifest.json"),
        "out_dir": str(tmp_path / "ignored"),
        "seed": 11,
        "cost": {"review_hours": 2.0},
    }
    config_path = tmp_path / "campaign.json"
    config_path.write_text(json.dumps(config), encoding="utf-8")
    # --out overrides the config file's out_dir
    assert run_cli("judge", "--config", config_path, "--out", out) == 0
    assert (out / "20B" / "comparisons.jsonl").exists()
    assert not (tmp_path / "ignored").exists()


def test_config_unknown_key_rejected(tmp_path, capsys):
    config_path = tmp_path / "campaign.json"
    config_path.write_text(json.dumps({"wat": 1}), encoding="utf-8")
    code = run_cli("ingest", "--config", config_path)
    captured = capsys.readouterr()
    assert code == 1
    assert "wat" in captured.err


def test_cost_override_flag(manifest_dir, tmp_path, capsys):
    out = tmp_path / "out"
    code = run_cli(
        "cost", *pipeline_args(manifest_dir, out), "--cost", "review_hours=2.0"
    )
    captured = capsys.readouterr()
    assert code == 0
    assert "$109.81" in captured.out  # 2x the single-hour review cost


def test_judge_spend_estimate_tracks_pair_count(tmp_path, capsys):
    docs = tmp_path / "docs"
    docs.mkdir()
    proposals = []
    for k in range(30):
        pid = f"N{k:02d}"
        (docs / f"{pid}.md").write_text(f"text {pid}", encoding="utf-8")
        proposals.append({"proposal_id": pid, "path": f"docs/{pid}.md"})
    manifest = {"cycles": [{"cycle_id": "CN", "proposals": proposals}]}
    (tmp_path / "m.json").write_text(json.dumps(manifest), encoding="utf-8")
    code = run_cli("judge", "--manifest", tmp_path / "m.json", "--out", tmp_path / "out")
    captured = capsys.readouterr()
    assert code == 0
    assert "30 pairs" not in captured.out  # 30 proposals means 435 pairs
    assert "435 pairs" in captured.out
    # spend estimate = 435 * llm cost per pair = 435 * 0.0045982
    assert "$2.0002" in captured.out


def test_console_module_entry_point(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "pairrank.cli", "cost", "--out", str(tmp_path / "out")],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0
    assert "11,935" in result.stdout


def test_sparse_schedule_via_flags(tmp_path, capsys):
    out = tmp_path / "out"
    docs = tmp_path / "docs"
    docs.mkdir()
    proposals = []
    for k in range(8):
        pid = f"S{k}"
        (docs / f"{pid}.md").write_text(f"text {pid}", encoding="utf-8")
        proposals.append({"proposal_id": pid, "path": f"docs/{pid}.md"})
    manifest = {"cycles": [{"cycle_id": "CS", "proposals": proposals}]}
    (tmp_path / "m.json").write_text(json.dumps(manifest), encoding="utf-8")
    code = run_cli(
        "judge",
        "--manifest", tmp_path / "m.json",
        "--out", out,
        "--schedule", "sparse",
        "--k-per-item", "2",
        "--seed", "4",
    )
    captured = capsys.readouterr()
    assert code == 0
    n_lines = len((out / "CS" / "comparisons.jsonl").read_text().splitlines())
    assert 8 <= n_lines < 28  # sparser than the full 8*7/2 tournament
