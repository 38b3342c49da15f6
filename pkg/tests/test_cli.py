import json

import numpy as np
import pytest

from delayreach.cli import build_parser, main


SUBCOMMANDS = [
    "lyapunov",
    "simulate",
    "escape",
    "estimate-r",
    "rfc-sweep",
    "es-check",
    "uga-table",
    "equiv-check",
]

EXPECTED_FLAGS = {
    "lyapunov": ["--lambda", "--constants"],
    "simulate": ["--system", "--T", "--history", "--input", "--tau", "--grid"],
    "escape": ["--dwell", "--grid"],
    "estimate-r": ["--system", "--r", "--T", "--budget"],
    "rfc-sweep": [],
    "es-check": ["--n", "--T", "--tol"],
    "uga-table": ["--r", "--eps", "--samples"],
    "equiv-check": ["--pairs"],
}


class TestHelp:
    def test_top_level_help_lists_all_subcommands(self, capsys):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for name in SUBCOMMANDS:
            assert name in out
        for flag in ["--config", "--seed", "--out", "--svg"]:
            assert flag in out

    @pytest.mark.parametrize("name", SUBCOMMANDS)
    def test_subcommand_help_documents_flags(self, name, capsys):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args([name, "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for flag in EXPECTED_FLAGS[name]:
            assert flag in out


class TestLyapunov:
    def test_json_output(self, capsys, tmp_path):
        assert main(["--out", str(tmp_path), "lyapunov", "--lambda", "0"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data["P"] == [[25.0, -1.0], [-1.0, 6.3]]
        assert data["residual"] <= 1e-12

    def test_constants(self, capsys, tmp_path):
        assert main(["--out", str(tmp_path), "lyapunov", "--constants"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert 0.0 < data["capital_lambda"] < 0.05
        assert data["k"] > 1.0
        assert 0.0 < data["p"] <= 1.0


class TestSimulate:
    def test_zero_history_gives_zero_csv(self, tmp_path, capsys):
        code = main(
            ["--out", str(tmp_path), "simulate", "--system", "cascade", "--history", "zero", "--T", "5"]
        )
        assert code == 0
        lines = (tmp_path / "trajectory.csv").read_text().strip().splitlines()
        assert lines[0] == "t,x1,x2,x3"
        body = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        assert np.array_equal(body[:, 1:], np.zeros_like(body[:, 1:]))

    def test_constant_history_decays(self, tmp_path, capsys):
        code = main(
            [
                "--out",
                str(tmp_path),
                "simulate",
                "--system",
                "cascade",
                "--history",
                "const:0.5,0,0",
                "--T",
                "2",
                "--tau",
                "1.0",
            ]
        )
        assert code == 0
        summary = json.loads((tmp_path / "simulate_summary.json").read_text())
        assert summary["outcome"] == "completed"

    def test_bad_history_spec_is_config_error(self, tmp_path, capsys):
        code = main(["--out", str(tmp_path), "simulate", "--history", "garbage"])
        assert code == 2


class TestEscape:
    def test_escape_exits_zero(self, tmp_path, capsys, escape_run):
        code = main(["--out", str(tmp_path), "escape"])
        assert code == 0
        summary = json.loads((tmp_path / "escape_summary.json").read_text())
        assert summary["outcome"] == "escaped"
        assert summary["t_escape"] < 20.0


class TestDeterminism:
    def test_same_seed_byte_identical_csv(self, tmp_path, capsys):
        args = ["estimate-r", "--system", "planar", "--r", "0.5", "--T", "1", "--budget", "4"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["--out", str(a), "--seed", "42", *args]) == 0
        assert main(["--out", str(b), "--seed", "42", *args]) == 0
        assert (a / "estimate_r.csv").read_bytes() == (b / "estimate_r.csv").read_bytes()

    def test_csv_has_full_precision(self, tmp_path, capsys):
        assert (
            main(
                [
                    "--out",
                    str(tmp_path),
                    "simulate",
                    "--system",
                    "planar",
                    "--history",
                    "const:0.12345678901234567,0",
                    "--T",
                    "1",
                ]
            )
            == 0
        )
        first_row = (tmp_path / "trajectory.csv").read_text().splitlines()[1]
        assert "0.12345678901234566" in first_row or "0.12345678901234567" in first_row


class TestConfig:
    def test_invalid_config_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = main(["--config", str(bad), "--out", str(tmp_path), "lyapunov"])
        assert code == 2

    def test_gain_override(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"A2": [[-1.0, 0.0], [0.0, -1.0]]}))
        assert main(["--config", str(cfg), "--out", str(tmp_path), "lyapunov", "--lambda", "0"]) == 0
        data = json.loads(capsys.readouterr().out)
        # lyapunov solution of -I is I/2
        assert data["P"] == [[0.5, 0.0], [0.0, 0.5]]


class TestSvg:
    def test_escape_svg_written(self, tmp_path, capsys, escape_run):
        svg = tmp_path / "plot.svg"
        assert main(["--out", str(tmp_path), "--svg", str(svg), "escape"]) == 0
        text = svg.read_text()
        assert text.startswith("<svg") and "polyline" in text
