"""
Integration tests for the command-line entry point.

Each test calls ``main`` with an argument list and a throwaway config whose
logging and output go into a temporary directory.
"""

import io
import json
import tempfile
import unittest
from contextlib import redirect_stdout
from pathlib import Path

import pandas as pd
import pytest

from main import EXIT_ERROR, EXIT_USAGE, build_parser, main

# Test constants
TOY_CSV = "site,z,y\nA,0,1\nA,1,2\nB,0,3\nB,1,5\n"
SIM_FLAGS = ["--J", "12", "--n-range", "10:20", "--psi-std", "0.2", "--seed", "3"]


@pytest.mark.integration
class TestCli(unittest.TestCase):
    """Test cases for the subcommands end to end."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.config = self.dir / "lre.yml"
        self.config.write_text(
            f"logging:\n  environment: prod\n  log_dir: {self.dir / 'logs'}\n",
            encoding="utf-8",
        )

    def tearDown(self):
        self.tmp.cleanup()

    def _main(self, *argv: str) -> int:
        with redirect_stdout(io.StringIO()):
            return main(["--config", str(self.config), *argv])

    def _simulate(self) -> Path:
        out = self.dir / "sim"
        assert self._main("simulate", *SIM_FLAGS, "--out", str(out)) == 0
        return out

    def test_simulate_writes_data_truth_and_provenance(self):
        """Test the simulate outputs."""
        out = self._simulate()

        for name in ("data.csv", "sites.csv", "truth.csv", "truth.json", "provenance.json"):
            assert (out / name).exists(), name
        provenance = json.loads((out / "provenance.json").read_text(encoding="utf-8"))
        assert provenance["command"] == "simulate"
        assert provenance["generator"]["J"] == 12
        assert "--seed" in provenance["argv"]

    def test_fit_twostep_and_itt(self):
        """Test that fit writes the estimate table and the model JSON."""
        sim = self._simulate()
        out = self.dir / "fit"
        status = self._main(
            "fit",
            "--data", str(sim / "data.csv"),
            "--sites", str(sim / "sites.csv"),
            "--strategy", "itt,twostep",
            "--out", str(out),
        )  # fmt: skip

        assert status == 0
        estimates = pd.read_csv(out / "estimates.csv")
        assert list(estimates.columns) == ["site", "strategy", "point", "post_var", "tier"]
        assert len(estimates) == 24
        model = json.loads((out / "model.json").read_text(encoding="utf-8"))
        assert [s["strategy"] for s in model["strategies"]] == ["ITT", "TWOSTEP"]
        twostep = model["strategies"][1]
        assert twostep["model"]["random_slope_variance"] >= 0
        assert "const" in twostep["model"]["fixed_effects"]["treatment"]
        eb = pd.read_csv(out / "eb_twostep.csv")
        assert list(eb.columns) == ["site", "eta0_star", "eta0_postvar", "v1_star", "v1_postvar", "lambda11"]
        assert eb["eta0_star"].notna().all()
        assert not (out / "eb_itt.csv").exists()
        assert (out / "provenance.json").exists()

    def test_fit_itt_on_toy_csv(self):
        """Test hand-computed ITT points on the two-site toy file."""
        data = self.dir / "toy.csv"
        data.write_text(TOY_CSV, encoding="utf-8")
        out = self.dir / "toy"

        assert self._main("fit", "--data", str(data), "--strategy", "itt", "--out", str(out)) == 0
        estimates = pd.read_csv(out / "estimates.csv")
        assert estimates["point"].tolist() == [1.0, 2.0]

    def test_benchmark_without_truth_is_usage_error(self):
        """Test that me_adj_x_u without --truth exits with status 2."""
        sim = self._simulate()
        status = self._main(
            "fit", "--data", str(sim / "data.csv"), "--sites", str(sim / "sites.csv"),
            "--strategy", "me_adj_x_u", "--out", str(self.dir / "fit"),
        )  # fmt: skip

        assert status == EXIT_USAGE

    def test_benchmark_with_truth(self):
        """Test that me_adj_x_u runs when the truth file is given."""
        sim = self._simulate()
        status = self._main(
            "fit", "--data", str(sim / "data.csv"), "--sites", str(sim / "sites.csv"),
            "--truth", str(sim / "truth.csv"), "--strategy", "me_adj_x_u",
            "--out", str(self.dir / "fit"),
        )  # fmt: skip

        assert status == 0

    def test_invalid_data_exits_with_error(self):
        """Test that a dataset with a missing arm exits with status 1."""
        data = self.dir / "bad.csv"
        data.write_text("site,z,y\nA,1,1\nA,1,2\nB,0,3\nB,1,5\n", encoding="utf-8")

        assert self._main("fit", "--data", str(data), "--strategy", "itt") == EXIT_ERROR

    def test_missing_config_is_usage_error(self):
        """Test that an explicit config path must exist."""
        with redirect_stdout(io.StringIO()):
            status = main(["--config", str(self.dir / "absent.yml"), "report", "x.csv"])

        assert status == EXIT_USAGE

    def test_unknown_flag_rejected(self):
        """Test that argparse rejects unknown flags."""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["fit", "--data", "d.csv", "--bogus"])

    def test_study_smoke_then_report(self):
        """Test a one-replication study and the report of its summary."""
        out = self.dir / "study"
        status = self._main(
            "study", "--replications", "1", "--psi", "0", "--scenario", "1",
            "--size", "10:10:20", "--strategy", "itt,twostep", "--out", str(out),
        )  # fmt: skip

        assert status == 0
        summary = pd.read_csv(out / "summary.csv")
        assert summary["strategy"].tolist() == ["ITT", "TWOSTEP"]
        provenance = json.loads((out / "provenance.json").read_text(encoding="utf-8"))
        assert provenance["command"] == "study"
        assert list((out / "cells").glob("*.json"))

        report_dir = self.dir / "report"
        buffer = io.StringIO()
        with redirect_stdout(buffer):
            status = main(
                ["--config", str(self.config), "report", str(out / "summary.csv"),
                 "--out", str(report_dir)]
            )  # fmt: skip

        assert status == 0
        assert "Scenario 1" in buffer.getvalue()
        assert (report_dir / "report.txt").read_text(encoding="utf-8") == buffer.getvalue()
        assert (report_dir / "report_provenance.json").exists()

    def test_consistency_skips_oversized_cells(self):
        """Test the consistency command with a tiny record limit."""
        out = self.dir / "consistency"
        status = self._main(
            "consistency", "--J", "10", "--nbar", "20", "--nbar", "1000",
            "--psi", "0.1", "--max-records", "5000", "--out", str(out),
        )  # fmt: skip

        assert status == 0
        table = pd.read_csv(out / "consistency.csv")
        assert table["skipped"].tolist() == [False, True]
