"""Tests for the command-line surface."""

import io
import json
import math
import sys
from pathlib import Path

import pytest
import yaml

from src.cli import EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK, build_parser, main, run
from src.reporting.writers import read_csv

PAIR = {
    "scatterers": [
        {"position": 0.0, "lambda": 0.1},
        {"position": 0.95, "lambda": 0.1},
    ],
    "pump": {"left": 1.0, "right": 1.0},
    "grid_points_per_wavelength": 32,
}


def _run(*argv: str) -> tuple[int, str]:
    stream = io.StringIO()
    status = run(list(argv), stderr=stream)
    return status, stream.getvalue()


class TestParser:
    """Tests for argument parsing."""

    def test_subcommands_registered(self):
        """Should accept every subcommand."""
        parser = build_parser()
        for argv in (
            ["solve", "--config", "a.yaml"],
            ["forces", "--config", "a.yaml"],
            ["relax", "--config", "a.yaml", "--frozen", "0,2"],
            ["equilibrate", "--config", "a.yaml", "--tol", "1e-9"],
            ["minimize", "--config", "a.yaml", "--greedy"],
            ["sweep", "--mirror-lambda", "none", "--z-range", "0.1,0.9"],
            ["scenario", "fig3", "--grid", "64x8"],
        ):
            args = parser.parse_args(argv)
            assert args.command == argv[0]

    def test_frozen_parsed(self):
        """Should parse comma-separated indices."""
        args = build_parser().parse_args(["relax", "--config", "a.yaml", "--frozen", "2,0"])
        assert args.frozen == (2, 0)

    def test_mirrorless_sweep(self):
        """Should read 'none' as no mirrors."""
        args = build_parser().parse_args(["sweep", "--mirror-lambda", "none"])
        assert args.mirror_lambda is None

    def test_usage_error_exits_one(self):
        """Should return 1 with a usage message for bad arguments."""
        status, stderr = _run("solve")
        assert status == EXIT_INVALID
        assert "usage:" in stderr

    def test_unknown_scenario(self):
        """Should reject unknown scenario names."""
        status, _ = _run("scenario", "fig9")
        assert status == EXIT_INVALID

    @pytest.mark.parametrize(
        "argv",
        [
            ["relax", "--config", "a.yaml", "--frozen", "0,x"],
            ["sweep", "--z-range", "0.1"],
            ["sweep", "--length-range", "a,b"],
            ["sweep", "--mirror-lambda", "high"],
        ],
    )
    def test_malformed_values_exit_one(self, argv):
        """Should turn malformed option values into a usage error."""
        status, stderr = _run(*argv)
        assert status == EXIT_INVALID
        assert "usage:" in stderr

    def test_greedy_can_be_switched_off(self):
        """Should leave --greedy unset unless given either way."""
        parser = build_parser()
        assert parser.parse_args(["minimize", "--config", "a.yaml"]).greedy is None
        assert parser.parse_args(["minimize", "--config", "a.yaml", "--no-greedy"]).greedy is False

    @pytest.mark.parametrize("grid", ["abc", "1"])
    def test_bad_points_per_wavelength(self, write_config, tmp_path: Path, grid):
        """Should exit 1 for a non-integer or too small --grid on solve."""
        status, stderr = _run(
            "solve", "--config", str(write_config(PAIR)), "--out", str(tmp_path), "--grid", grid
        )
        assert status == EXIT_INVALID
        assert "--grid" in stderr

    def test_main_reads_argv(self, monkeypatch):
        """Should run with the process arguments."""
        monkeypatch.setattr(sys, "argv", ["lightstack", "scenario", "fig9"])
        assert main() == EXIT_INVALID


class TestSolveCommand:
    """Tests for the solve subcommand."""

    def test_writes_outputs(self, write_config, tmp_path: Path):
        """Should write profile, regions, summary, manifest and run log."""
        out = tmp_path / "out"
        status, stderr = _run("solve", "--config", str(write_config(PAIR)), "--out", str(out))

        assert status == EXIT_OK
        for name in ("profile.csv", "regions.csv", "summary.yaml", "manifest.yaml", "run.jsonl"):
            assert (out / name).exists()
        header, rows = read_csv(out / "regions.csv")
        assert header[0] == "region"
        assert len(rows) == 3
        assert "[lightstack]" in stderr

    def test_manifest_reproduces_run(self, write_config, tmp_path: Path):
        """Should give byte-identical outputs when rerun from the manifest."""
        first, second = tmp_path / "first", tmp_path / "second"
        _run("solve", "--config", str(write_config(PAIR)), "--out", str(first), "--grid", "64")
        status, _ = _run("solve", "--config", str(first / "manifest.yaml"), "--out", str(second))

        assert status == EXIT_OK
        for name in ("profile.csv", "regions.csv", "summary.yaml"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_manifest_contents(self, write_config, tmp_path: Path):
        """Should record status, outputs and the resolved configuration."""
        out = tmp_path / "out"
        _run("solve", "--config", str(write_config(PAIR)), "--out", str(out))
        manifest = yaml.safe_load((out / "manifest.yaml").read_text())

        assert manifest["status"] == "ok"
        assert manifest["subcommand"] == "solve"
        assert "profile.csv" in manifest["outputs"]
        assert len(manifest["config"]["scatterers"]) == 2

    def test_run_log_records_lifecycle(self, write_config, tmp_path: Path):
        """Should log start, events and end."""
        out = tmp_path / "out"
        _run("solve", "--config", str(write_config(PAIR)), "--out", str(out))
        lines = [json.loads(line) for line in (out / "run.jsonl").read_text().splitlines()]

        assert lines[0]["type"] == "start"
        assert lines[-1]["type"] == "end"
        assert lines[-1]["status"] == "ok"

    def test_overlapping_scatterers_exit_one(self, write_config, tmp_path: Path):
        """Should exit 1 naming the offending index."""
        data = {
            "scatterers": [{"position": 0.0, "lambda": 0.1}, {"position": 0.0, "lambda": 0.1}],
            "pump": {"left": 1.0},
        }
        out = tmp_path / "out"
        status, stderr = _run("solve", "--config", str(write_config(data)), "--out", str(out))

        assert status == EXIT_INVALID
        assert "OverlappingScatterers at index 1" in stderr
        assert yaml.safe_load((out / "manifest.yaml").read_text())["status"] == "invalid"

    def test_missing_config_exit_one(self, tmp_path: Path):
        """Should exit 1 for a missing configuration file."""
        status, stderr = _run("solve", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path))
        assert status == EXIT_INVALID
        assert "not found" in stderr

    def test_quiet(self, write_config, tmp_path: Path):
        """Should print nothing on success when quiet."""
        status, stderr = _run(
            "solve", "--config", str(write_config(PAIR)), "--out", str(tmp_path / "o"), "--quiet"
        )
        assert status == EXIT_OK
        assert stderr == ""


class TestOtherCommands:
    """Tests for the remaining subcommands."""

    def test_forces(self, write_config, tmp_path: Path):
        """Should write both force formulas per scatterer."""
        out = tmp_path / "out"
        status, _ = _run("forces", "--config", str(write_config(PAIR)), "--out", str(out))

        assert status == EXIT_OK
        header, rows = read_csv(out / "forces.csv")
        assert header == ["index", "position", "lambda", "force_eq6", "force_eq5", "energy"]
        assert len(rows) == 2
        summary = yaml.safe_load((out / "summary.yaml").read_text())
        assert summary["max_force_discrepancy"] < 1e-10

    def test_equilibrate(self, write_config, tmp_path: Path):
        """Should converge the cloud pair and write its lattice report."""
        out = tmp_path / "out"
        status, _ = _run("equilibrate", "--config", str(write_config(PAIR)), "--out", str(out))

        assert status == EXIT_OK
        data = yaml.safe_load((out / "equilibrium.yaml").read_text())
        assert data["converged"] is True
        assert data["stability"] == "stable"
        assert data["lattice"]["predicted_constant"] == pytest.approx(0.46827, abs=1e-5)
        header, rows = read_csv(out / "lattice.csv")
        assert header == ["j", "gap", "chi"]
        assert [row[0] for row in rows] == ["0", "1"]
        assert rows[0][1] == "nan"
        assert float(rows[1][1]) == pytest.approx(0.96827, abs=1e-5)
        assert float(rows[1][2]) == pytest.approx(2 * math.atan(0.1), abs=1e-6)

    def test_equilibrate_not_converged_exit_two(self, write_config, tmp_path: Path):
        """Should exit 2 and still write the best configuration."""
        data = {**PAIR, "scatterers": [{"position": 0.0, "lambda": 0.1}, {"position": 0.75, "lambda": 0.1}]}
        out = tmp_path / "out"
        status, stderr = _run(
            "equilibrate", "--config", str(write_config(data)), "--out", str(out), "--max-steps", "1"
        )

        assert status == EXIT_NOT_CONVERGED
        assert "Error" in stderr
        assert yaml.safe_load((out / "equilibrium.yaml").read_text())["converged"] is False
        assert yaml.safe_load((out / "manifest.yaml").read_text())["status"] == "not_converged"

    def test_relax(self, write_config, tmp_path: Path):
        """Should relax to the pair spacing."""
        out = tmp_path / "out"
        status, _ = _run("relax", "--config", str(write_config(PAIR)), "--out", str(out))

        assert status == EXIT_OK
        _, rows = read_csv(out / "positions.csv")
        assert float(rows[1][1]) - float(rows[0][1]) == pytest.approx(0.96827, abs=1e-5)
        header, _ = read_csv(out / "lattice.csv")
        assert header == ["j", "gap", "chi"]

    def test_frozen_out_of_range(self, write_config, tmp_path: Path):
        """Should exit 1 for a frozen index past the stack."""
        status, _ = _run(
            "relax", "--config", str(write_config(PAIR)), "--out", str(tmp_path), "--frozen", "5"
        )
        assert status == EXIT_INVALID

    def test_minimize_is_deterministic(self, write_config, tmp_path: Path):
        """Should write identical traces for identical seeds."""
        config = str(write_config(PAIR))
        for name in ("a", "b"):
            status, _ = _run(
                "minimize", "--config", config, "--out", str(tmp_path / name),
                "--sweeps", "50", "--seed", "4", "--threads", "1",
            )
            assert status == EXIT_OK
        for name in ("trace.csv", "final.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_minimize_headers(self, write_config, tmp_path: Path):
        """Should write the trace per sweep and the final positions with their gaps."""
        out = tmp_path / "out"
        status, _ = _run(
            "minimize", "--config", str(write_config(PAIR)), "--out", str(out),
            "--sweeps", "5", "--threads", "1",
        )

        assert status == EXIT_OK
        header, rows = read_csv(out / "trace.csv")
        assert header == ["sweep", "energy", "acceptance_rate"]
        assert len(rows) == 5
        header, rows = read_csv(out / "final.csv")
        assert header == ["j", "position", "gap", "intensity"]
        assert rows[0][2] == "nan"
        assert float(rows[1][2]) == pytest.approx(float(rows[1][1]) - float(rows[0][1]))

    def test_minimize_manifest_replays_chains(self, write_config, tmp_path: Path):
        """Should record the chain count and replay it from the manifest."""
        first, second = tmp_path / "first", tmp_path / "second"
        status, _ = _run(
            "minimize", "--config", str(write_config(PAIR)), "--out", str(first),
            "--sweeps", "20", "--chains", "3", "--seed", "5", "--threads", "1",
        )
        assert status == EXIT_OK
        config = yaml.safe_load((first / "manifest.yaml").read_text())["config"]
        assert config["chains"] == 3
        assert config["greedy"] is False

        status, _ = _run(
            "minimize", "--config", str(first / "manifest.yaml"), "--out", str(second),
            "--threads", "1",
        )
        assert status == EXIT_OK
        for name in ("trace.csv", "final.csv", "summary.yaml"):
            assert (first / name).read_bytes() == (second / name).read_bytes()
        assert len(yaml.safe_load((second / "summary.yaml").read_text())["chains"]) == 3

    def test_greedy_recorded(self, write_config, tmp_path: Path):
        """Should record --greedy so a replay descends greedily too."""
        out = tmp_path / "out"
        _run(
            "minimize", "--config", str(write_config(PAIR)), "--out", str(out),
            "--sweeps", "5", "--greedy", "--threads", "1",
        )
        assert yaml.safe_load((out / "manifest.yaml").read_text())["config"]["greedy"] is True

    def test_relax_manifest_replays_options(self, write_config, tmp_path: Path):
        """Should record the time step and tolerance and replay them from the manifest."""
        first, second = tmp_path / "first", tmp_path / "second"
        status, _ = _run(
            "relax", "--config", str(write_config(PAIR)), "--out", str(first),
            "--dt", "0.5", "--tol", "1e-12",
        )
        assert status == EXIT_OK
        config = yaml.safe_load((first / "manifest.yaml").read_text())["config"]
        assert config["relax"] == {"dt": 0.5, "tol": 1e-12, "max_steps": 20000}

        status, _ = _run("relax", "--config", str(first / "manifest.yaml"), "--out", str(second))
        assert status == EXIT_OK
        for name in ("positions.csv", "lattice.csv", "equilibrium.yaml"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_equilibrate_records_limits(self, write_config, tmp_path: Path):
        """Should record the Newton and fallback limits in the manifest."""
        out = tmp_path / "out"
        _run("equilibrate", "--config", str(write_config(PAIR)), "--out", str(out))
        config = yaml.safe_load((out / "manifest.yaml").read_text())["config"]
        assert config["equilibrate"] == {"tol": 1e-12, "max_iter": 50, "max_steps": 20000}

    def test_sweep(self, tmp_path: Path):
        """Should write grid, rows and summary for a small map."""
        out = tmp_path / "out"
        status, _ = _run("sweep", "--out", str(out), "--grid", "64x4", "--threads", "1")

        assert status == EXIT_OK
        header, rows = read_csv(out / "grid.csv")
        assert header == ["z_a", "L", "force_over_F0"]
        assert len(rows) == 256
        assert float(rows[0][0]) == pytest.approx(0.05)
        assert float(rows[0][1]) == pytest.approx(2.5)
        assert (out / "rows.csv").exists()

    def test_bad_grid_exit_one(self, tmp_path: Path):
        """Should reject a malformed --grid."""
        status, stderr = _run("sweep", "--out", str(tmp_path), "--grid", "64")
        assert status == EXIT_INVALID
        assert "--grid" in stderr

    def test_scenario_fig3(self, tmp_path: Path):
        """Should write the force map of the splitter scenario."""
        out = tmp_path / "out"
        status, _ = _run("scenario", "fig3", "--out", str(out), "--grid", "64x8")

        assert status == EXIT_OK
        for name in ("grid.csv", "summary.yaml", "manifest.yaml"):
            assert (out / name).exists()
        assert yaml.safe_load((out / "manifest.yaml").read_text())["subcommand"] == "scenario fig3"


class TestScenarioReruns:
    """Tests that scenario outputs repeat byte for byte."""

    @staticmethod
    def _twice(tmp_path: Path, *argv: str) -> tuple[Path, Path]:
        outs = (tmp_path / "a", tmp_path / "b")
        for out in outs:
            status, _ = _run("scenario", *argv, "--out", str(out), "--threads", "1")
            assert status == EXIT_OK
        return outs

    @staticmethod
    def _assert_same(first: Path, second: Path, names: tuple[str, ...]) -> None:
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_fig1_reduced(self, tmp_path: Path):
        """Should repeat a short annealing run for the same seed."""
        first, second = self._twice(
            tmp_path, "fig1", "--clouds", "12", "--sweeps", "30", "--chains", "2", "--seed", "3"
        )
        self._assert_same(first, second, ("trace.csv", "final.csv", "forces.csv", "summary.yaml"))
        _, rows = read_csv(first / "final.csv")
        assert len(rows) == 12

    def test_fig2(self, tmp_path: Path):
        """Should repeat the cavity scan, both profiles and the summary."""
        first, second = self._twice(tmp_path, "fig2", "--grid", "16")
        self._assert_same(
            first,
            second,
            ("scan.csv", "profile_energy_minimum.csv", "profile_equilibrium.csv", "summary.yaml"),
        )

    def test_fig3(self, tmp_path: Path):
        """Should repeat the force map and its row analysis."""
        first, second = self._twice(tmp_path, "fig3", "--grid", "32x4")
        self._assert_same(first, second, ("grid.csv", "rows.csv", "summary.yaml"))
