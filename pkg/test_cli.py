import math
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

import cli
from cli import CommandResult, build_config, load_matrix, main
from run_report import ConfigError, VerificationReport, parse_config
from symplectic import rotation


@pytest.fixture
def runner():
    return CliRunner()


def write_matrix(path: Path, matrix: np.ndarray) -> Path:
    d = matrix.shape[0] // 2
    lines = [f"d={d}"] + [" ".join(repr(float(v)) for v in row) for row in matrix]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_summary(path: Path) -> dict:
    items = {}
    for line in path.read_text().splitlines():
        key, value = line.split(": ", 1)
        items[key] = value
    return items


class TestParseConfig:
    def test_valid_weyl_sum(self):
        config = parse_config("command=weyl-sum\ngeometry=circle\ntau=0.5\nlambda_max=100")
        assert config.command == "weyl-sum"
        assert config.geometry == "circle"
        assert config.tau == 0.5
        assert config.lambda_max == 100.0

    def test_negative_tau_names_range(self):
        with pytest.raises(ConfigError, match=r"tau must lie in \(0, tau_cap") as err:
            parse_config("command=weyl-sum\ngeometry=circle\ntau=-1\nlambda_max=100")
        assert err.value.line == 3

    def test_torus_without_m(self):
        with pytest.raises(ConfigError, match="missing required key 'm'") as err:
            parse_config("command=weyl-sum\n# flat torus\ngeometry=torus\ntau=0.5\nlambda_max=10")
        assert err.value.line == 3

    def test_missing_command_key(self):
        with pytest.raises(ConfigError, match="missing required key 'lambda'"):
            parse_config("command=extract\ngeometry=circle\ntau=0.5")

    def test_unknown_and_repeated_keys(self):
        with pytest.raises(ConfigError, match="unknown key 'radius'") as err:
            parse_config("command=verify-all\n\nradius=2")
        assert err.value.line == 3
        with pytest.raises(ConfigError, match="repeated"):
            parse_config("tau=0.5\ntau=0.6")

    def test_invalid_value(self):
        with pytest.raises(ConfigError, match="invalid value") as err:
            parse_config("command=weyl-sum\nlambda_max=lots")
        assert err.value.line == 2

    def test_exponent_overflow_guard(self):
        with pytest.raises(ConfigError, match="exceeds 700"):
            parse_config("command=weyl-sum\ngeometry=circle\ntau=2.0\nlambda_max=200")

    def test_n_max_satisfies_lambda_max(self):
        config = parse_config("command=husimi\ngeometry=sphere\ntau=0.5\nN_max=20")
        assert config.effective_lambda_max == pytest.approx(math.sqrt(420))

    def test_lists_and_comments(self):
        config = parse_config("direction = 0.6, 0.8  # unit\nlattice_vector=3 4\n", validate=False)
        assert config.direction == (0.6, 0.8)
        assert config.lattice_vector == (3, 4)


class TestBuildConfig:
    def test_flag_overrides_file(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("geometry=circle\ntau=0.5\nlambda_max=100\n")
        config = build_config("weyl-sum", str(path), {"tau": 0.25, "lambda_": None, "base_point": "0.5"})
        assert config.tau == 0.25
        assert config.lambda_max == 100.0
        assert config.base_point == (0.5,)

    def test_subcommand_wins_over_file_command(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("command=beam\ngeometry=circle\ntau=0.5\nlambda_max=10\n")
        assert build_config("weyl-sum", str(path), {}).command == "weyl-sum"


class TestLoadMatrix:
    def test_reads_rotation(self, tmp_path):
        S = rotation([1.0, 2.5])
        matrix = load_matrix(str(write_matrix(tmp_path / "S.txt", S.matrix)))
        assert np.array_equal(matrix, S.matrix)

    def test_wrong_row_length(self, tmp_path):
        path = tmp_path / "S.txt"
        path.write_text("d=1\n1 0\n0\n")
        with pytest.raises(ConfigError) as err:
            load_matrix(str(path))
        assert err.value.line == 3

    def test_missing_header(self, tmp_path):
        path = tmp_path / "S.txt"
        path.write_text("# comment\n1 0\n0 1\n")
        with pytest.raises(ConfigError, match="d=<int>") as err:
            load_matrix(str(path))
        assert err.value.line == 2


class TestCommands:
    def test_version(self, runner):
        result = runner.invoke(main, ["--version"])
        assert result.exit_code == 0
        assert "Grauert Tube Weyl Law" in result.output

    def test_classify_prints_tag_and_sequence(self, runner, tmp_path):
        path = write_matrix(tmp_path / "S.txt", rotation([1.0, 2.5]).matrix)
        out = tmp_path / "out"
        result = runner.invoke(main, ["classify", "--matrix-file", str(path), "--output-dir", str(out)])
        assert result.exit_code == 0, result.output
        assert "tag: Elliptic" in result.output
        lines = (out / "classify.csv").read_text().splitlines()
        assert lines[0] == "n,re,im,abs"
        assert len(lines) == 6
        # unit-modulus elliptic sequence
        assert all(float(line.split(",")[3]) == pytest.approx(1.0, abs=1e-9) for line in lines[1:])

    def test_weyl_sum_circle(self, runner, tmp_path):
        out = tmp_path / "out"
        args = ["weyl-sum", "--geometry", "circle", "--tau", "0.5", "--lambda-max", "20",
                "--grid-points", "50", "--workers", "1", "--output-dir", str(out)]
        result = runner.invoke(main, args)
        assert result.exit_code == 0, result.output
        lines = (out / "weyl-sum.csv").read_text().splitlines()
        assert lines[0] == "lambda,P_tau,model,residual"
        assert len(lines) == 51
        rows = [[float(v) for v in line.split(",")] for line in lines[1:]]
        # the closed form drops the e^{-4 tau (floor(lambda) + 1)} tail
        residuals = [abs(row[3]) for row in rows if row[0] >= 10.0]
        assert max(residuals) < 1e-6
        summary = read_summary(out / "weyl-sum_summary.txt")
        assert summary["model"] == "closed-form"
        assert summary["workers"] == "1"
        assert "wall_time_s" in summary

    def test_default_grid_has_1000_points(self, runner, tmp_path):
        out = tmp_path / "out"
        result = runner.invoke(main, ["weyl-sum", "--geometry", "circle", "--tau", "0.5",
                                      "--lambda-max", "100", "--output-dir", str(out)])
        assert result.exit_code == 0, result.output
        assert len((out / "weyl-sum.csv").read_text().splitlines()) == 1001

    def test_csv_is_deterministic_across_runs(self, runner, tmp_path):
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            args = ["weyl-sum", "--geometry", "torus", "--m", "2", "--tau", "0.5", "--lambda-max", "15",
                    "--grid-points", "40", "--workers", "2", "--output-dir", str(out)]
            result = runner.invoke(main, args)
            assert result.exit_code == 0, result.output
            outputs.append((out / "weyl-sum.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_workers_from_environment(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv("GW_WORKERS", "3")
        out = tmp_path / "out"
        args = ["weyl-sum", "--geometry", "circle", "--tau", "0.5", "--lambda-max", "10",
                "--grid-points", "8", "--workers", "1", "--output-dir", str(out)]
        assert runner.invoke(main, args).exit_code == 0
        assert read_summary(out / "weyl-sum_summary.txt")["workers"] == "3"

    def test_output_dir_from_environment(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv("GW_OUTPUT_DIR", str(tmp_path / "env_out"))
        args = ["weyl-sum", "--geometry", "circle", "--tau", "0.5", "--lambda-max", "10", "--grid-points", "8"]
        assert runner.invoke(main, args).exit_code == 0
        assert (tmp_path / "env_out" / "weyl-sum.csv").exists()

    def test_run_file(self, runner, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text(f"command=qfunc\nmatrix_file={write_matrix(tmp_path / 'S.txt', rotation(1.0).matrix)}\n"
                        f"period_T={2 * math.pi!r}\nlambda_max=3\ngrid_points=40\nsummation_N=2000\n"
                        f"output_dir={tmp_path / 'out'}\n")
        result = runner.invoke(main, ["run", str(path)])
        assert result.exit_code == 0, result.output
        summary = read_summary(tmp_path / "out" / "qfunc_summary.txt")
        assert summary["continuity"] == "JumpsAt"
        assert summary["summation_N"] == "2000"
        assert summary["jumps_in_range"] == "3"

    def test_beam_on_sphere(self, runner, tmp_path):
        out = tmp_path / "out"
        args = ["beam", "--curvature", "sphere", "--beam-k", "10", "--steps", "2000",
                "--grid-points", "16", "--output-dir", str(out)]
        result = runner.invoke(main, args)
        assert result.exit_code == 0, result.output
        summary = read_summary(out / "beam_summary.txt")
        assert float(summary["r_kq"]) == 10.5
        moduli = [float(line.split(",")[3]) for line in (out / "beam.csv").read_text().splitlines()[1:]]
        assert len(moduli) == 16
        assert max(moduli) == pytest.approx(min(moduli), rel=1e-9)

    def test_config_error_exits_1(self, runner, tmp_path):
        result = runner.invoke(main, ["weyl-sum", "--geometry", "circle", "--tau=-1", "--lambda-max", "10",
                                      "--output-dir", str(tmp_path)])
        assert result.exit_code == 1
        assert "Configuration Error" in result.output

    def test_library_error_exits_1(self, runner, tmp_path):
        path = tmp_path / "S.txt"
        path.write_text("d=1\n2 0\n0 2\n")
        result = runner.invoke(main, ["classify", "--matrix-file", str(path), "--output-dir", str(tmp_path)])
        assert result.exit_code == 1
        assert "Error" in result.output

    def test_failed_verification_exits_2(self, runner, tmp_path, monkeypatch):
        def failing(config, workers):
            report = VerificationReport()
            report.add("always_off", 1.0, 2.0, 0.1, "closed-form")
            return CommandResult(["name"], [("always_off",)], {"checks": 1}, report)

        monkeypatch.setitem(cli.RUNNERS, "verify-all", failing)
        result = runner.invoke(main, ["verify-all", "--output-dir", str(tmp_path)])
        assert result.exit_code == 2
        text = (tmp_path / "verification_report.txt").read_text()
        assert "always_off,1.0,2.0,0.1,FAIL,closed-form" in text
        assert text.endswith("result: FAIL (0/1)\n")


@pytest.mark.slow
def test_verify_all_passes(runner, tmp_path):
    result = runner.invoke(main, ["verify-all", "--output-dir", str(tmp_path)])
    assert result.exit_code == 0, result.output
    report = (tmp_path / "verification_report.txt").read_text()
    assert "FAIL" not in report
    assert report.splitlines()[-1].startswith("result: pass")
