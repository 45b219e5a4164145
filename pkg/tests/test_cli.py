"""Tests for the homomag command line."""

import json

import pytest
from click.testing import CliRunner

from homomag.cli import main
from homomag.core.config import parse_config, parse_config_text
from homomag.core.io import load_snapshots, read_container, read_manifest

LAYERED = """\
dimension = 1
a = single-harmonic mean=2 amp=1 k=1
K = 0.5
N_cell = 16
N = {N}
T = 0.002
tau = 1e-3
"""


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def configs(tmp_path):
    """Homogenized run on 16 cells and a correction grid of 64 cells."""
    coarse = tmp_path / "coarse.cfg"
    coarse.write_text(LAYERED.format(N=16))
    fine = tmp_path / "fine.cfg"
    fine.write_text(LAYERED.format(N=64))
    return coarse, fine


class TestCellCommand:
    """Test `homomag cell`."""

    def test_constant_material(self, runner, tmp_path):
        """a = 2 homogenizes to a0 = 2."""
        config = tmp_path / "const.cfg"
        config.write_text("dimension = 1\na = 2\nN_cell = 16\n")
        out = tmp_path / "cell"
        result = runner.invoke(main, ["cell", str(config), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "a0_11 = 2.000000000000e+00" in result.output
        assert (out / "cells.bin").exists()
        assert (out / "cell_summary.txt").exists()
        manifest = read_manifest(out)
        assert manifest["subcommand"] == "cell"
        assert "cells.bin" in manifest["outputs"]


class TestExitCodes:
    """Test error to exit-code mapping."""

    def test_missing_config(self, runner, tmp_path):
        """A missing config exits with 5."""
        result = runner.invoke(main, ["cell", str(tmp_path / "absent.cfg")])
        assert result.exit_code == 5

    def test_validation_error(self, runner, tmp_path):
        """alpha = -1 exits with 3 and names the constraint."""
        config = tmp_path / "bad.cfg"
        config.write_text("dimension = 1\nalpha = -1\n")
        result = runner.invoke(main, ["cell", str(config)])
        assert result.exit_code == 3
        assert "alpha > 0" in result.output

    def test_parse_error(self, runner, tmp_path):
        """An unknown key exits with 2."""
        config = tmp_path / "bad.cfg"
        config.write_text("dimension = 1\ncolour = red\n")
        result = runner.invoke(main, ["cell", str(config)])
        assert result.exit_code == 2
        assert "line 2" in result.output

    def test_missing_cells(self, runner, tmp_path, configs):
        """correct without a cell container exits with 5."""
        _, fine = configs
        result = runner.invoke(main, ["correct", str(fine), "--cells", str(tmp_path / "none.bin"),
                                      "--trajectory", str(tmp_path / "none_traj.bin"), "--eps", "0.125"])
        assert result.exit_code == 5


class TestConvergeCommand:
    """Test `homomag converge` planning."""

    def test_dry_run(self, runner, tmp_path, configs):
        """A dry run prints the plan and writes nothing."""
        coarse, _ = configs
        out = tmp_path / "sweep"
        result = runner.invoke(main, ["converge", str(coarse), "--dry-run", "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "Planned rows" in result.output
        assert "Dry run" in result.output
        assert not out.exists()

    def test_dry_run_echoes_resolved_config(self, runner, configs):
        """The dry run prints the config with defaults filled, parseable again."""
        coarse, _ = configs
        result = runner.invoke(main, ["converge", str(coarse), "--dry-run"])
        assert result.exit_code == 0, result.output
        config = parse_config(coarse)
        assert f"Resolved config (hash {config.config_hash()[:12]})" in result.output
        echoed = result.output.split("):\n", 1)[1].split("\n🛑", 1)[0]
        assert parse_config_text(echoed).config_hash() == config.config_hash()
        assert "energy_check = warn" in echoed


class TestPipeline:
    """Test cell -> simulate -> correct -> energy on a tiny problem."""

    def test_pipeline(self, runner, tmp_path, configs):
        """Every stage reads the artifacts of the one before."""
        coarse, fine = configs
        cells_dir, sim_dir = tmp_path / "cells", tmp_path / "sim"
        corr_dir, energy_dir = tmp_path / "corr", tmp_path / "energy"

        result = runner.invoke(main, ["cell", str(coarse), "--out", str(cells_dir)])
        assert result.exit_code == 0, result.output
        cells = str(cells_dir / "cells.bin")

        result = runner.invoke(main, ["simulate", str(coarse), "--cells", cells, "--out", str(sim_dir),
                                      "--plot"])
        assert result.exit_code == 0, result.output
        snapshots, attrs = load_snapshots(sim_dir / "snapshots.bin")
        assert attrs["level"] == "hom"
        assert snapshots[-1].t == pytest.approx(0.002)
        assert (sim_dir / "energy_log.csv").exists()
        assert (sim_dir / "energy_history.png").read_bytes()[:4] == b"\x89PNG"
        summary = json.loads((sim_dir / "run_summary.json").read_text())
        assert summary["steps"] == 2

        result = runner.invoke(main, ["correct", str(fine), "--cells", cells,
                                      "--trajectory", str(sim_dir / "snapshots.bin"),
                                      "--eps", "0.125", "--out", str(corr_dir)])
        assert result.exit_code == 0, result.output
        fields, header = read_container(corr_dir / "corrected.bin")
        assert header["N"] == 64
        assert "tilde_00000" in fields
        assert (corr_dir / "identity_defects.csv").exists()

        result = runner.invoke(main, ["energy", str(coarse), "--cells", cells,
                                      "--field", str(sim_dir / "snapshots.bin"), "--out", str(energy_dir)])
        assert result.exit_code == 0, result.output
        energy = json.loads((energy_dir / "energy.json").read_text())
        assert energy["level"] == "hom"
        assert set(energy["landau"]) >= {"exchange", "anisotropy", "total"}

    def test_correct_rejects_eps_trajectory(self, runner, tmp_path, configs):
        """An eps-level trajectory cannot be corrected."""
        coarse, fine = configs
        cells_dir, sim_dir = tmp_path / "cells", tmp_path / "sim"
        runner.invoke(main, ["cell", str(coarse), "--out", str(cells_dir)])
        eps_cfg = tmp_path / "eps.cfg"
        eps_cfg.write_text(LAYERED.format(N=64) + "eps = 1/8\n")
        result = runner.invoke(main, ["simulate", str(eps_cfg), "--cells", str(cells_dir / "cells.bin"),
                                      "--out", str(sim_dir)])
        assert result.exit_code == 0, result.output
        result = runner.invoke(main, ["correct", str(fine), "--cells", str(cells_dir / "cells.bin"),
                                      "--trajectory", str(sim_dir / "snapshots.bin"), "--eps", "0.125"])
        assert result.exit_code == 5


def test_version(runner):
    """--version prints the package version."""
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "homomag" in result.output


if __name__ == '__main__':
    pytest.main([__file__])
