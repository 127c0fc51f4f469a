import json
import subprocess
import sys
from pathlib import Path

from ghaudit.adjudicate import ReviewStatus, Stage
from ghaudit.cli import main
from ghaudit.store import load_labels, load_review_queue

WORKFLOWS = Path(__file__).parent / "fixtures" / "workflows"
PANEL_DIR = Path(__file__).parent / "fixtures" / "panel"


def _endpoint_config(tmp_path, base_url):
    config = {
        "endpoints": [
            {"model_id": f"mock-{s}", "base_url": base_url, "role": "PANELIST",
             "max_retries": 2, "timeout": 10, "backoff_base": 0.0}
            for s in "abcd"
        ] + [
            {"model_id": "mock-judge", "base_url": base_url, "role": "TIEBREAKER",
             "temperature": 1.0, "max_retries": 2, "timeout": 10,
             "backoff_base": 0.0}
        ],
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


class TestAuditCommand:
    def test_clean_workflow_exits_zero(self, tmp_path):
        status = main(["audit", str(WORKFLOWS / "clean_pinned.yml"),
                       "--out-dir", str(tmp_path / "out")])
        assert status == 0

    def test_unpinned_action_exits_nonzero(self, tmp_path):
        status = main(["audit", str(WORKFLOWS / "unpinned_tag.yml"),
                       "--out-dir", str(tmp_path / "out")])
        assert status == 1

    def test_strict_mode_gates_hybrid_criteria(self, tmp_path):
        # clean fixture passes static checks but has advisory HYBRID NOs
        status = main(["audit", str(WORKFLOWS / "clean_pinned.yml"), "--strict",
                       "--out-dir", str(tmp_path / "out")])
        assert status == 1

    def test_directory_input_and_artifacts(self, tmp_path, capsys):
        out = tmp_path / "out"
        status = main(["audit", str(WORKFLOWS), "--out-dir", str(out)])
        assert status == 1  # corpus contains violations by design
        for name in ("labels.jsonl", "report.md", "report.csv", "report.json",
                     "static_findings.jsonl", "catalog.json"):
            assert (out / name).exists()
        assert "audited 28 workflow(s)" in capsys.readouterr().out

    def test_s13_no_in_report(self, tmp_path):
        out = tmp_path / "out"
        main(["audit", str(WORKFLOWS / "unpinned_tag.yml"), "--out-dir", str(out)])
        labels = load_labels(out / "labels.jsonl")
        s13 = [l for l in labels if l.key.criterion_id == "S13"]
        assert len(s13) == 1 and s13[0].verdict.value == "NO"

    def test_threshold_override_flag(self, tmp_path):
        out = tmp_path / "out"
        main(["audit", str(WORKFLOWS / "long_run_script.yml"),
              "--s1-threshold", "50", "--out-dir", str(out)])
        labels = {l.key.criterion_id: l for l in load_labels(out / "labels.jsonl")}
        assert labels["S1"].verdict.value == "YES"


class TestJudgeFlow:
    def test_audit_judge_end_to_end(self, tmp_path, mock_server_factory):
        server = mock_server_factory(lambda m, w, c: "YES")
        config = _endpoint_config(tmp_path, server.base_url)
        out = tmp_path / "out"
        status = main(["audit", str(PANEL_DIR / "wf1.yml"), "--judge",
                       "--config", str(config), "--out-dir", str(out)])
        assert status == 0
        labels = load_labels(out / "labels.jsonl")
        assert len(labels) == 30
        assert (out / "sheets.jsonl").exists()

    def test_judge_then_adjudicate(self, tmp_path, mock_server_factory):
        server = mock_server_factory(lambda m, w, c: "YES")
        config = _endpoint_config(tmp_path, server.base_url)
        out = tmp_path / "out"
        assert main(["judge", str(PANEL_DIR / "wf1.yml"),
                     "--config", str(config), "--out-dir", str(out)]) == 0
        assert (out / "sheets.jsonl").exists()
        assert main(["adjudicate", "--config", str(config),
                     "--out-dir", str(out)]) == 0
        labels = load_labels(out / "labels.jsonl")
        assert len(labels) == 30

    def test_stats_command(self, tmp_path, mock_server_factory, capsys):
        server = mock_server_factory(lambda m, w, c: "YES")
        config = _endpoint_config(tmp_path, server.base_url)
        out = tmp_path / "out"
        main(["audit", str(PANEL_DIR / "wf1.yml"), str(PANEL_DIR / "wf2.yml"),
              "--judge", "--config", str(config), "--out-dir", str(out)])
        assert main(["stats", "--out-dir", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "Fleiss' kappa" in printed
        agreement = json.loads((out / "agreement.json").read_text())
        assert agreement["item_count"] == 60
        assert agreement["band_counts"]["UNANIMOUS"] == 60

    def test_report_command(self, tmp_path, capsys):
        out = tmp_path / "out"
        main(["audit", str(WORKFLOWS / "clean_pinned.yml"), "--out-dir", str(out)])
        capsys.readouterr()
        assert main(["report", "--out-dir", str(out), "--format", "markdown"]) == 0
        rendered = capsys.readouterr().out
        assert "# Compliance Report" in rendered

    def test_report_without_labels_fails(self, tmp_path, capsys):
        assert main(["report", "--out-dir", str(tmp_path / "void")]) == 2


class TestReviewCommand:
    def _seed_queue(self, tmp_path, mock_server_factory):
        """Run the designed split mock so W1 items land in the queue."""
        from test_pipeline import mock_answer

        server = mock_server_factory(mock_answer)
        config = _endpoint_config(tmp_path, server.base_url)
        out = tmp_path / "out"
        main(["audit", str(PANEL_DIR / "wf1.yml"), "--judge",
              "--config", str(config), "--out-dir", str(out)])
        return out

    def test_review_applies_manual_verdict(self, tmp_path, mock_server_factory,
                                           monkeypatch, capsys):
        out = self._seed_queue(tmp_path, mock_server_factory)
        pending = [e for e in load_review_queue(out / "review_queue.jsonl")
                   if e.status is ReviewStatus.PENDING]
        assert len(pending) == 1

        answers = iter(["y"])
        monkeypatch.setattr("builtins.input", lambda prompt="": next(answers))
        assert main(["review", "--reviewer", "alex", "--out-dir", str(out)]) == 0

        labels = {l.key.criterion_id: l for l in load_labels(out / "labels.jsonl")}
        w1 = labels["W1"]
        assert w1.stage is Stage.MANUAL
        assert w1.verdict.value == "YES"
        assert w1.reviewer == "alex"
        queue = load_review_queue(out / "review_queue.jsonl")
        assert all(e.status is ReviewStatus.DONE for e in queue)
        audit_lines = (out / "audit_log.jsonl").read_text().splitlines()
        assert any('"manual_review"' in line and '"alex"' in line
                   for line in audit_lines)

    def test_review_skip_stays_unresolved(self, tmp_path, mock_server_factory,
                                          monkeypatch):
        out = self._seed_queue(tmp_path, mock_server_factory)
        answers = iter(["s"])
        monkeypatch.setattr("builtins.input", lambda prompt="": next(answers))
        main(["review", "--reviewer", "alex", "--out-dir", str(out)])
        labels = {l.key.criterion_id: l for l in load_labels(out / "labels.jsonl")}
        assert labels["W1"].stage is Stage.UNRESOLVED
        queue = load_review_queue(out / "review_queue.jsonl")
        assert all(e.status is ReviewStatus.SKIPPED for e in queue)

    def test_empty_queue(self, tmp_path, capsys):
        assert main(["review", "--reviewer", "r",
                     "--out-dir", str(tmp_path / "void")]) == 0
        assert "empty" in capsys.readouterr().out


class TestSampleCommand:
    def test_filter_and_sample(self, tmp_path, capsys):
        manifest = tmp_path / "repos.jsonl"
        rows = []
        for owner in ("alpha", "beta", "gamma"):
            for i in range(40):
                rows.append({"full_name": f"{owner}/repo{i}",
                             "stars": 5 + i, "workflow_run_count": 40 + i})
        manifest.write_text("\n".join(json.dumps(r) for r in rows))
        out = tmp_path / "sample.jsonl"
        status = main(["sample", "--manifest", str(manifest), "--stratify",
                       "--seed", "7", "--out", str(out)])
        assert status == 0
        selected = [json.loads(l) for l in out.read_text().splitlines()]
        # stars >= 10 and runs >= 50 leaves 30 repos per owner (i >= 10)
        assert all(r["stars"] >= 10 and r["workflow_run_count"] >= 50
                   for r in selected)
        owners = {r["full_name"].split("/")[0] for r in selected}
        assert owners == {"alpha", "beta", "gamma"}

    def test_deterministic_given_seed(self, tmp_path):
        manifest = tmp_path / "repos.jsonl"
        rows = [{"full_name": f"o{i % 4}/r{i}", "stars": 50,
                 "workflow_run_count": 100} for i in range(60)]
        manifest.write_text("\n".join(json.dumps(r) for r in rows))
        first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        main(["sample", "--manifest", str(manifest), "--stratify", "--seed", "3",
              "--out", str(first)])
        main(["sample", "--manifest", str(manifest), "--stratify", "--seed", "3",
              "--out", str(second)])
        assert first.read_text() == second.read_text()


def test_console_entry_point():
    result = subprocess.run([sys.executable, "-m", "ghaudit.cli", "--help"],
                            capture_output=True, text=True)
    assert result.returncode == 0
    for command in ("audit", "judge", "adjudicate", "review", "stats",
                    "report", "sample"):
        assert command in result.stdout


def test_installed_script_help():
    result = subprocess.run(["ghaudit", "--help"], capture_output=True, text=True)
    assert result.returncode == 0
    assert "compliance auditor" in result.stdout
