import json
import subprocess
import sys
from pathlib import Path

import pytest

from datamkt import (
    instance_to_dict,
    make_joint_cycle,
    make_random_independent,
    make_random_joint,
    make_random_symmetric,
    make_singleton_conflict,
    save_instance,
)

GOLDEN_DIR = Path(__file__).parent / "golden"


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "datamkt.cli", *args],
                          capture_output=True, text=True)


@pytest.fixture
def conflict_file(tmp_path):
    path = tmp_path / "conflict.json"
    save_instance(make_singleton_conflict(3, 0.1), path)
    return path


class TestGenerate:
    def test_builds_instance_from_spec(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"kind": "singleton-conflict", "n": 3,
                                    "epsilon": 0.1}))
        out = tmp_path / "inst.json"
        proc = run_cli("generate", "--instance", str(spec), "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        doc = json.loads(out.read_text())
        ref = instance_to_dict(make_singleton_conflict(3, 0.1))
        assert doc == ref

    def test_bad_kind_exits_2(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"kind": "nonsense"}))
        proc = run_cli("generate", "--instance", str(spec),
                       "--out", str(tmp_path / "x.json"))
        assert proc.returncode == 2
        assert "kind" in proc.stderr

    def test_every_kind_generates_and_validates(self, tmp_path):
        specs = [
            {"kind": "singleton-conflict", "n": 3},
            {"kind": "bundle-trap", "n": 3, "alpha": 0.5},
            {"kind": "joint-cycle", "k": 2, "a": 1, "b": 2, "alpha": 0.5},
            {"kind": "symmetric-gap", "n": 3},
            {"kind": "random-independent", "n": 2, "k": 2, "seed": 1},
            {"kind": "random-symmetric", "n": 2, "k": 2, "seed": 1},
            {"kind": "random-joint", "n": 2, "k": 2, "seed": 1},
            {"kind": "random-closeness", "n": 2, "k": 3, "seed": 1},
        ]
        for idx, doc in enumerate(specs):
            spec = tmp_path / f"spec{idx}.json"
            spec.write_text(json.dumps(doc))
            out = tmp_path / f"inst{idx}.json"
            proc = run_cli("generate", "--instance", str(spec), "--out", str(out))
            assert proc.returncode == 0, (doc, proc.stderr)
            proc = run_cli("validate", "--instance", str(out))
            assert proc.returncode == 0
            assert json.loads(proc.stdout)["all_ok"] is True, doc


class TestAnalyze:
    def test_singleton_conflict_report(self, conflict_file, tmp_path):
        out = tmp_path / "report.json"
        proc = run_cli("analyze", "--instance", str(conflict_file), "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        doc = json.loads(out.read_text())
        assert doc["worst_wrae"] == pytest.approx(2.7, abs=1e-9)
        assert doc["pure_equilibria"] == [[1, 2, 4]]
        assert doc["dominant_profile"] == [1, 2, 4]

    def test_joint_cycle_reports_no_equilibrium(self, tmp_path):
        path = tmp_path / "cycle.json"
        save_instance(make_joint_cycle(2, 1, 2, 0.25), path)
        proc = run_cli("analyze", "--instance", str(path))
        assert proc.returncode == 0, proc.stderr
        doc = json.loads(proc.stdout)
        assert doc["pure_equilibria"] == []
        assert doc["worst_wrae"] is None

    def test_malformed_file_exits_2_and_names_field(self, tmp_path):
        path = tmp_path / "broken.json"
        doc = instance_to_dict(make_singleton_conflict(3, 0.1))
        del doc["gain"]
        path.write_text(json.dumps(doc))
        proc = run_cli("analyze", "--instance", str(path))
        assert proc.returncode == 2
        assert "gain" in proc.stderr

    def test_unparseable_json_exits_2(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        proc = run_cli("analyze", "--instance", str(path))
        assert proc.returncode == 2

    def test_budget_exceeded_exits_3(self, tmp_path):
        path = tmp_path / "joint.json"
        save_instance(make_random_joint(3, 2, seed=1), path)
        proc = run_cli("analyze", "--instance", str(path), "--budget", "10")
        assert proc.returncode == 3

    @pytest.mark.parametrize("name", ["singleton_conflict", "bundle_trap",
                                      "joint_cycle", "symmetric_gap"])
    def test_golden_reports(self, name, tmp_path):
        inst_file = GOLDEN_DIR / f"{name}.instance.json"
        expected = json.loads((GOLDEN_DIR / f"{name}.report.json").read_text())
        out = tmp_path / "report.json"
        proc = run_cli("analyze", "--instance", str(inst_file), "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        assert json.loads(out.read_text()) == expected


class TestSimulate:
    def test_trace_files_byte_identical_per_seed(self, tmp_path):
        inst = tmp_path / "inst.json"
        save_instance(make_random_independent(2, 3, seed=3, alpha=0.5), inst)
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run
            proc = run_cli("simulate", "--instance", str(inst), "--out", str(out),
                           "-T", "50", "--seeds", "7", "--learner", "zooming")
            assert proc.returncode == 0, proc.stderr
            outs.append((out / "trace_7.jsonl").read_bytes())
        assert outs[0] == outs[1]

    def test_scripted_summary_reports_zero_regret(self, tmp_path):
        inst = tmp_path / "inst.json"
        save_instance(make_random_independent(2, 3, seed=3, alpha=0.5), inst)
        out = tmp_path / "runs"
        proc = run_cli("simulate", "--instance", str(inst), "--out", str(out),
                       "-T", "60", "--seeds", "1", "2", "3",
                       "--learner", "dominant-scripted")
        assert proc.returncode == 0, proc.stderr
        summary = json.loads((out / "summary.json").read_text())
        assert summary["effective_regret"]["mean"] == [0.0, 0.0]
        assert summary["effective_regret"]["std"] == [0.0, 0.0]

    def test_round_records_have_the_declared_shape(self, tmp_path):
        inst = tmp_path / "inst.json"
        save_instance(make_random_independent(2, 2, seed=4, alpha=0.25), inst)
        out = tmp_path / "runs"
        proc = run_cli("simulate", "--instance", str(inst), "--out", str(out),
                       "-T", "10", "--seeds", "5", "--learner", "zooming,ucb")
        assert proc.returncode == 0, proc.stderr
        lines = (out / "trace_5.jsonl").read_text().splitlines()
        assert len(lines) == 11  # 10 rounds + summary
        first = json.loads(lines[0])
        assert set(first) == {"t", "alpha", "profile", "utilities",
                              "transactions", "per_buyer"}
        assert first["t"] == 1 and len(first["profile"]) == 2
        assert set(first["per_buyer"][0]) == {"pulls", "active_count"}
        tail = json.loads(lines[-1])
        assert tail["summary"] is True and tail["seed"] == 5
        assert abs(sum(json.loads(lines[3])["transactions"])) <= 1e-12

    def test_joint_model_exits_4(self, tmp_path):
        inst = tmp_path / "inst.json"
        save_instance(make_random_joint(2, 2, seed=5), inst)
        proc = run_cli("simulate", "--instance", str(inst),
                       "--out", str(tmp_path / "runs"),
                       "-T", "10", "--seeds", "1")
        assert proc.returncode == 4
        assert "independent" in proc.stderr

    def test_corollary_alpha_accepted(self, tmp_path):
        inst = tmp_path / "inst.json"
        save_instance(make_random_independent(2, 2, seed=6), inst)
        out = tmp_path / "runs"
        proc = run_cli("simulate", "--instance", str(inst), "--out", str(out),
                       "-T", "40", "--seeds", "1", "--alpha", "corollary")
        assert proc.returncode == 0, proc.stderr
        lines = (out / "trace_1.jsonl").read_text().splitlines()
        alphas = [json.loads(line)["alpha"] for line in lines[:-1]]
        assert all(b >= a for a, b in zip(alphas, alphas[1:]))

    def test_bad_alpha_exits_2(self, tmp_path, conflict_file):
        proc = run_cli("simulate", "--instance", str(conflict_file),
                       "--out", str(tmp_path / "runs"),
                       "-T", "10", "--seeds", "1", "--alpha", "warm")
        assert proc.returncode == 2


class TestValidate:
    def test_constructor_output_passes(self, conflict_file):
        proc = run_cli("validate", "--instance", str(conflict_file))
        assert proc.returncode == 0
        doc = json.loads(proc.stdout)
        assert doc["all_ok"] is True

    def test_corrupted_row_is_reported(self, tmp_path):
        inst = make_random_independent(3, 2, seed=7)
        doc = instance_to_dict(inst)
        for m in range(4):
            doc["externality"][0][1][m] = 0.9
            doc["externality"][2][1][m] = 0.9
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        proc = run_cli("validate", "--instance", str(path))
        assert proc.returncode == 0
        report = json.loads(proc.stdout)
        assert report["all_ok"] is False
        failing = {c["name"] for c in report["checks"] if not c["ok"]}
        assert failing == {"externality-sum-bound"}

    def test_asymmetric_entry_is_located(self, tmp_path):
        inst = make_random_symmetric(3, 2, seed=8)
        doc = instance_to_dict(inst)
        doc["externality"][0][1][2][3] = 0.4999
        path = tmp_path / "asym.json"
        path.write_text(json.dumps(doc))
        proc = run_cli("validate", "--instance", str(path), "--expect-symmetric")
        report = json.loads(proc.stdout)
        failing = [c for c in report["checks"] if not c["ok"]]
        assert [c["name"] for c in failing] == ["joint-symmetry"]
        assert "e[0][1](mask 2, mask 3)" in failing[0]["detail"]
