"""End-to-end checks of the command-line interface.

Every subcommand must be byte-deterministic: running the same invocation
twice must print identical text and write identical files.
"""

import hashlib
import io
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

import pytest

from trafficmarket.cli import main


def run_cli(argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


def file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestAuction:
    def test_paper_example_tbsap(self):
        code, out, err = run_cli(
            ["auction", "--mechanism", "tbsap", "--scenario", "paper-example"]
        )
        assert code == 0 and err == ""
        assert "winners: 0 1" in out
        assert "payments: 0=2.0 1=3.0" in out
        assert "profit: 9.0" in out

    def test_greedy_pays_winning_bids_here(self):
        code, out, _ = run_cli(
            ["auction", "--mechanism", "greedy", "--scenario", "paper-example"]
        )
        assert code == 0
        assert "payments: 0=2.0 1=2.0" in out

    def test_budget_override(self):
        code, out, _ = run_cli(
            ["auction", "--scenario", "paper-example", "--budget", "2"]
        )
        assert code == 0
        assert "winners: 0\n" in out

    def test_outcome_csv(self, tmp_path):
        out_file = tmp_path / "outcome.csv"
        code, _, _ = run_cli(
            ["auction", "--scenario", "paper-example", "--out", str(out_file)]
        )
        assert code == 0
        lines = out_file.read_text().splitlines()
        assert lines[0] == "vehicle_id,bid,payment,profit"
        assert len(lines) == 3

    def test_oracle_size_guard(self, tmp_path):
        scn = tmp_path / "big.json"
        code, _, _ = run_cli(
            ["gen", "--seed", "9", "--n-tasks", "40", "--n-vehicles", "200",
             "--budget", "50", "--city-side", "300", "--out", str(scn)]
        )
        assert code == 0
        code, out, err = run_cli(
            ["auction", "--scenario", str(scn), "--mechanism", "oracle"]
        )
        assert code != 0
        assert "brute force" in err and out == ""

    def test_missing_scenario_file(self):
        code, _, err = run_cli(["auction", "--scenario", "/nonexistent.json"])
        assert code != 0 and "error:" in err

    def test_malformed_scenario_file(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code, _, err = run_cli(["auction", "--scenario", str(bad)])
        assert code != 0 and "error:" in err


class TestGenRoundTrip:
    def test_gen_then_auction(self, tmp_path):
        scn = tmp_path / "scn.json"
        code, out, _ = run_cli(
            ["gen", "--seed", "3", "--n-tasks", "12", "--n-vehicles", "40",
             "--budget", "20", "--city-side", "400", "--out", str(scn)]
        )
        assert code == 0 and scn.exists()
        assert "budget=20.0" in out
        code, out, _ = run_cli(["auction", "--scenario", str(scn)])
        assert code == 0 and "winners:" in out

    def test_gen_rejects_bad_config(self, tmp_path):
        code, _, err = run_cli(
            ["gen", "--seed", "1", "--n-tasks", "5", "--n-vehicles", "5",
             "--budget", "0", "--out", str(tmp_path / "x.json")]
        )
        assert code != 0 and "error:" in err


class TestConsensus:
    def test_history_csv(self, tmp_path):
        hist = tmp_path / "hist.csv"
        code, out, _ = run_cli(
            ["consensus", "--nodes", "30", "--committee", "12", "--active", "4",
             "--epochs", "3", "--abnormal-frac", "0.2", "--seed", "5",
             "--out", str(hist)]
        )
        assert code == 0
        assert "epochs: 3 rounds: 12" in out
        header = hist.read_text().splitlines()[0]
        assert header == "epoch,round,node_id,reputation,role,delta"

    def test_equal_mode_differs_under_attack(self, tmp_path):
        args = ["consensus", "--nodes", "30", "--committee", "12", "--active",
                "4", "--epochs", "2", "--abnormal-frac", "0.4", "--seed", "1"]
        _, rep_out, _ = run_cli(args + ["--mode", "reputation"])
        _, eq_out, _ = run_cli(args + ["--mode", "equal"])
        assert rep_out != eq_out

    def test_bad_fraction_rejected(self):
        code, _, err = run_cli(["consensus", "--abnormal-frac", "1.5"])
        assert code != 0 and "error:" in err


class TestTrade:
    def test_round_over_builtin_scenario(self, tmp_path):
        ledger = tmp_path / "ledger.csv"
        code, out, _ = run_cli(
            ["trade", "--scenario", "paper-example", "--scheme", "stub",
             "--out", str(ledger)]
        )
        assert code == 0
        assert "session 0: confirmed" in out
        assert "session 1: confirmed" in out
        assert "session 2: aborted(lost auction)" in out
        assert "paid 0: 2" in out and "paid 1: 3" in out
        assert "authority_balance: 0" in out
        lines = ledger.read_text().splitlines()
        assert lines[0] == "session_id,ta_id,vehicle_id,payment,block_id"
        assert len(lines) == 3

    def test_block_hash_is_scheme_independent(self):
        _, stub_out, _ = run_cli(
            ["trade", "--scenario", "paper-example", "--scheme", "stub"]
        )
        _, real_out, _ = run_cli(
            ["trade", "--scenario", "paper-example", "--scheme", "real"]
        )
        stub_block = [l for l in stub_out.splitlines() if l.startswith("block:")]
        real_block = [l for l in real_out.splitlines() if l.startswith("block:")]
        assert stub_block == real_block


class TestExperiment:
    RNW = ["experiment", "rnw-vs-rafn", "--seed", "7", "--nodes", "20",
           "--committee", "10", "--active", "2", "--grid", "0.0,0.4"]

    def test_rnw_csv(self, tmp_path):
        code, out, _ = run_cli(self.RNW + ["--out-dir", str(tmp_path)])
        assert code == 0
        path = tmp_path / "rnw-vs-rafn" / "7.csv"
        assert str(path) in out
        lines = path.read_text().splitlines()
        assert lines[0] == "rafn,mode,rnw,ideal"
        assert len(lines) == 5  # 2 grid points x 2 modes

    def test_trials_write_one_file_per_seed(self, tmp_path):
        code, _, _ = run_cli(
            ["experiment", "trajectory", "--seed", "3", "--trials", "2",
             "--out-dir", str(tmp_path)]
        )
        assert code == 0
        assert (tmp_path / "trajectory" / "3.csv").exists()
        assert (tmp_path / "trajectory" / "4.csv").exists()

    def test_inapplicable_override_rejected(self, tmp_path):
        code, _, err = run_cli(
            ["experiment", "trajectory", "--grid", "0.5",
             "--out-dir", str(tmp_path)]
        )
        assert code != 0
        assert "does not apply" in err

    def test_unknown_name_rejected(self):
        with pytest.raises(SystemExit):
            run_cli(["experiment", "nope"])


class TestDeterminism:
    """Criterion: identical invocations produce identical bytes."""

    def test_experiment_csv_identical_across_runs(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        for out_dir in (first, second):
            code, _, _ = run_cli(self.RNW_ARGS + ["--out-dir", str(out_dir)])
            assert code == 0
        assert file_hash(first / "rnw-vs-rafn" / "7.csv") == file_hash(
            second / "rnw-vs-rafn" / "7.csv"
        )

    RNW_ARGS = TestExperiment.RNW

    @pytest.mark.parametrize(
        "argv",
        [
            ["auction", "--scenario", "paper-example", "--mechanism", "tbsap"],
            ["auction", "--scenario", "paper-example", "--mechanism", "greedy"],
            ["auction", "--scenario", "paper-example", "--mechanism", "oracle"],
            ["consensus", "--nodes", "20", "--committee", "8", "--active", "3",
             "--epochs", "2", "--abnormal-frac", "0.25", "--seed", "11"],
            ["trade", "--scenario", "paper-example", "--scheme", "stub"],
            ["trade", "--scenario", "paper-example", "--scheme", "real"],
        ],
        ids=["tbsap", "greedy", "oracle", "consensus", "trade-stub", "trade-real"],
    )
    def test_stdout_identical_across_runs(self, argv):
        runs = [run_cli(list(argv)) for _ in range(2)]
        assert runs[0] == runs[1]
        assert runs[0][0] == 0

    def test_gen_file_identical_across_runs(self, tmp_path):
        hashes = []
        for name in ("a.json", "b.json"):
            path = tmp_path / name
            code, _, _ = run_cli(
                ["gen", "--seed", "3", "--n-tasks", "12", "--n-vehicles", "40",
                 "--budget", "20", "--city-side", "400", "--out", str(path)]
            )
            assert code == 0
            hashes.append(file_hash(path))
        assert hashes[0] == hashes[1]
