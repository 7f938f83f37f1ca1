import json
import subprocess
import sys

import pytest

from hetbia.cli import main, parse_config_file, parse_sweep, UsageError


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestDof:
    def test_three_user_table(self, capsys):
        code, out, _ = run_cli(["dof", "--K", "3", "--N", "2"], capsys)
        assert code == 0
        assert "9/2" in out
        assert "1/2" in out
        assert "4.500000" in out

    def test_two_user_gain(self, capsys):
        code, out, _ = run_cli(["dof", "--K", "2", "--N", "2"], capsys)
        assert code == 0
        assert "1/3" in out

    def test_grid(self, capsys):
        code, out, _ = run_cli(["dof", "--grid", "2..6,2..4"], capsys)
        assert code == 0
        data_rows = [
            l for l in out.splitlines()[1:] if l.strip() and not l.startswith("    ")
        ]
        assert len(data_rows) == 15

    def test_bad_grid_is_usage_error(self, capsys):
        code, _, err = run_cli(["dof", "--grid", "nope"], capsys)
        assert code == 1
        assert "grid" in err


class TestVerify:
    def test_defaults_pass(self, capsys):
        code, out, _ = run_cli(["verify", "--trials", "50", "--seed", "3"], capsys)
        assert code == 0
        assert "PASS: all invariants hold" in out
        assert "worst leakage" in out

    def test_larger_network(self, capsys):
        code, out, _ = run_cli(
            ["verify", "--K", "5", "--N", "3", "--trials", "20"], capsys
        )
        assert code == 0

    def test_break_w_fails_with_code_2(self, capsys):
        code, out, _ = run_cli(
            ["verify", "--trials", "10", "--break-w"], capsys
        )
        assert code == 2
        assert "FAIL" in out


class TestOptimizeC:
    def test_reference_value_and_outputs(self, tmp_path, capsys):
        code, out, _ = run_cli(
            ["optimize-c", "--K", "3", "--N", "2", "--out", str(tmp_path)], capsys
        )
        assert code == 0
        c_star = float(out.split("c* = ")[1].splitlines()[0])
        assert abs(c_star - 0.5299) < 1e-3
        csv = (tmp_path / "optimize_c.csv").read_text()
        assert csv.startswith("# schema=hetbia.optimize_c.v1\n# manifest_sha256=")
        manifest = json.loads((tmp_path / "optimize_c_manifest.json").read_text())
        assert manifest["command"] == "optimize-c"
        assert abs(manifest["c_star"] - 0.5299) < 1e-3


class TestConfigResolution:
    def test_file_then_flag_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("K = 2\nc = 0.3\nseed = 42\n# comment\n")
        code, out, _ = run_cli(
            ["dof", "--config", str(cfg), "--print-config", "--N", "3"], capsys
        )
        assert code == 0
        assert "K = 2" in out        # from file
        assert "c = 0.3" in out      # from file
        assert "N = 3" in out        # flag
        assert "seed = 42" in out

    def test_flag_overrides_file(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("c = 0.3\n")
        code, out, _ = run_cli(
            ["dof", "--config", str(cfg), "--c", "0.7", "--print-config"], capsys
        )
        assert code == 0
        assert "c = 0.7" in out

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("frobnicate = 1\n")
        with pytest.raises(UsageError):
            parse_config_file(cfg)

    def test_bad_value_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("K = banana\n")
        with pytest.raises(UsageError):
            parse_config_file(cfg)

    def test_invalid_config_exits_1(self, capsys):
        code, _, err = run_cli(["verify", "--c", "1.5", "--trials", "5"], capsys)
        assert code == 1
        assert "error" in err


class TestSweepParsing:
    def test_linspace_form(self):
        var, values = parse_sweep("noise_var=1:3:5")
        assert var == "noise_var"
        assert values == (1.0, 1.5, 2.0, 2.5, 3.0)

    def test_list_form(self):
        assert parse_sweep("c=0.2,0.53,0.9") == ("c", (0.2, 0.53, 0.9))

    @pytest.mark.parametrize("bad", ["c", "K=1:2:2", "c=a,b", "c=", "c=1:2"])
    def test_bad_specs(self, bad):
        with pytest.raises(UsageError):
            parse_sweep(bad)

    def test_missing_sweep_is_usage_error(self, tmp_path, capsys):
        code, _, err = run_cli(["ber", "--out", str(tmp_path)], capsys)
        assert code == 1
        assert "--sweep" in err


class TestExperimentOutputs:
    def test_ber_csv_schema_and_columns(self, tmp_path, capsys):
        code, _, _ = run_cli(
            ["ber", "--sweep", "c=0.2,0.53,0.9", "--trials", "300",
             "--out", str(tmp_path)],
            capsys,
        )
        assert code == 0
        lines = (tmp_path / "ber.csv").read_text().splitlines()
        assert lines[0] == "# schema=hetbia.ber.v1"
        assert lines[1].startswith("# manifest_sha256=")
        assert lines[2] == "sweep_value,macro_ber,femto_ber,macro_bits,femto_bits,resamples"
        assert len(lines) == 6
        row = lines[3].split(",")
        assert float(row[0]) == 0.2
        assert int(row[3]) == 300 * 4 * 3

    def test_rate_csv_schema_and_columns(self, tmp_path, capsys):
        code, _, _ = run_cli(
            ["rate", "--sweep", "noise_var=2:10:3", "--trials", "300",
             "--out", str(tmp_path)],
            capsys,
        )
        assert code == 0
        lines = (tmp_path / "rate.csv").read_text().splitlines()
        assert lines[0] == "# schema=hetbia.rate.v1"
        assert lines[2] == ("sweep_value,macro_rate_mean,macro_rate_stderr,"
                            "femto_rate_mean,femto_rate_stderr,trials")
        # full-precision floats round-trip
        val = lines[3].split(",")[1]
        assert repr(float(val)) == val

    def test_byte_identical_reruns_and_workers(self, tmp_path, capsys):
        args = ["ber", "--sweep", "a=3:12:3", "--trials", "600", "--seed", "5"]
        d1, d2, d3 = (tmp_path / n for n in ("r1", "r2", "r3"))
        assert run_cli(args + ["--workers", "1", "--out", str(d1)], capsys)[0] == 0
        assert run_cli(args + ["--workers", "4", "--out", str(d2)], capsys)[0] == 0
        assert run_cli(args + ["--workers", "2", "--out", str(d3)], capsys)[0] == 0
        ref = (d1 / "ber.csv").read_bytes()
        assert (d2 / "ber.csv").read_bytes() == ref
        assert (d3 / "ber.csv").read_bytes() == ref

    def test_manifest_round_trip(self, tmp_path, capsys):
        d1, d2 = tmp_path / "a", tmp_path / "b"
        code, _, _ = run_cli(
            ["rate", "--sweep", "noise_var=2,4", "--trials", "200",
             "--seed", "11", "--out", str(d1)],
            capsys,
        )
        assert code == 0
        manifest = d1 / "rate_manifest.json"
        code, _, _ = run_cli(
            ["rate", "--from-manifest", str(manifest), "--out", str(d2)], capsys
        )
        assert code == 0
        assert (d2 / "rate.csv").read_bytes() == (d1 / "rate.csv").read_bytes()

    def test_manifest_hash_matches_csv_header(self, tmp_path, capsys):
        run_cli(
            ["ber", "--sweep", "b=2,3", "--trials", "100", "--out", str(tmp_path)],
            capsys,
        )
        manifest = json.loads((tmp_path / "ber_manifest.json").read_text())
        header = (tmp_path / "ber.csv").read_text().splitlines()[1]
        assert header == f"# manifest_sha256={manifest['input_sha256']}"
        assert manifest["sweep"] == {"var": "b", "values": [2.0, 3.0]}


def test_numerical_failure_exits_3(tmp_path, capsys, monkeypatch):
    from hetbia import sim
    from hetbia.errors import RankDeficient

    def explode(*args, **kwargs):
        raise RankDeficient("synthetic degenerate channel")

    monkeypatch.setattr(sim, "run_ber_sweep", explode)
    code, _, err = run_cli(
        ["ber", "--sweep", "a=2,3", "--trials", "10", "--out", str(tmp_path)],
        capsys,
    )
    assert code == 3
    assert "numerical failure" in err


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "hetbia.cli", "dof", "--K", "3", "--N", "2"],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0
    assert "9/2" in proc.stdout
