import math
import os

import pytest

from gridmc.cli import (
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_USAGE,
    CliValidationError,
    RunConfig,
    main,
    parse_and_validate,
)


def read(path):
    with open(path) as fh:
        return fh.read()


class TestParseAndValidate:
    def test_capacity_flags(self):
        cfg = parse_and_validate(
            ["capacity", "--m", "10", "--k", "100000", "--paths", "10", "--seed", "7"]
        )
        assert cfg.command == "capacity"
        assert (cfg.m, cfg.k, cfg.paths, cfg.seed) == (10, 100000, 10, 7)

    def test_zero_m_names_field(self):
        with pytest.raises(CliValidationError) as err:
            parse_and_validate(["capacity", "--m", "0"])
        assert err.value.option == "m"
        assert "m:" in str(err.value)

    def test_config_file_then_flag_precedence(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("j = 6\nm = 4\nseed = 33   # comment\n")
        cfg = parse_and_validate(
            ["info-rate", "--config", str(cfg_file), "--j", "3", "--snr-db", "0"]
        )
        assert cfg.j == 3          # flag wins
        assert cfg.m == 4          # file value survives
        assert cfg.seed == 33

    def test_unknown_config_key(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("frobnicate = 1\n")
        with pytest.raises(CliValidationError):
            parse_and_validate(["capacity", "--config", str(cfg_file)])

    def test_bad_integer_in_config(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("k = ten\n")
        with pytest.raises(CliValidationError) as err:
            parse_and_validate(["capacity", "--config", str(cfg_file)])
        assert err.value.option == "k"

    def test_snr_list_and_range(self):
        # values starting with '-' need the '=' form, as usual with argparse
        cfg = parse_and_validate(["info-rate", "--snr-db=-10,-5,0:4:2,8"])
        assert cfg.snr_db == [-10.0, -5.0, 0.0, 2.0, 4.0, 8.0]

    def test_strip_width_against_m(self):
        with pytest.raises(CliValidationError) as err:
            parse_and_validate(["capacity", "--m", "3", "--strip-width", "5"])
        assert err.value.option == "strip-width"

    def test_missing_command(self):
        with pytest.raises(CliValidationError):
            parse_and_validate([])

    def test_env_out_dir_flag_wins(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GRIDMC_OUT", str(tmp_path / "env"))
        cfg = parse_and_validate(["oracle", "--m", "2"])
        assert cfg.out_dir == str(tmp_path / "env")
        cfg = parse_and_validate(["oracle", "--m", "2", "--out", "explicit"])
        assert cfg.out_dir == "explicit"


class TestExecute:
    def test_oracle_m4(self, tmp_path, capsys):
        code = main(["oracle", "--m", "4", "--out", str(tmp_path)])
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert f"{math.log2(1234):.10f}"[:8] in out
        assert "agreement" in out and "OK" in out
        assert (tmp_path / "oracle.csv").exists()
        assert (tmp_path / "manifest.txt").exists()

    def test_oracle_budget_exceeded(self, tmp_path):
        code = main(["oracle", "--m", "30", "--out", str(tmp_path)])
        assert code == EXIT_RUNTIME

    def test_validation_exit_code(self):
        assert main(["capacity", "--m", "0"]) == EXIT_USAGE

    def test_chain_check_passes(self, tmp_path, capsys):
        code = main(["chain-check", "--k", "20000", "--out", str(tmp_path)])
        assert code == EXIT_OK
        assert "PASS" in capsys.readouterr().out

    def test_capacity_run_artifacts_and_manifest(self, tmp_path, capsys):
        out = str(tmp_path / "run")
        code = main([
            "capacity", "--m", "3", "--k", "2000", "--paths", "2",
            "--seed", "123", "--out", out,
        ])
        assert code == EXIT_OK
        manifest = read(os.path.join(out, "manifest.txt"))
        for needle in ("seed = 123", "m = 3", "k = 2000", "paths = 2",
                       "thinning = 1", "resolved_burn_in = 30"):
            assert needle in manifest
        assert "C =" in capsys.readouterr().out
        trace = read(os.path.join(out, "capacity_trace.csv"))
        assert trace.startswith("# gridmc-trace v1")

    def test_reproducible_csv_bytes(self, tmp_path):
        args = ["capacity", "--m", "3", "--k", "1500", "--paths", "2", "--seed", "5"]
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(args + ["--out", out1]) == EXIT_OK
        assert main(args + ["--out", out2]) == EXIT_OK
        for name in ("capacity_trace.csv", "capacity_summary.csv"):
            assert read(os.path.join(out1, name)) == read(os.path.join(out2, name))

    def test_info_rate_run(self, tmp_path, capsys):
        out = str(tmp_path / "ir")
        code = main([
            "info-rate", "--m", "2", "--l", "3", "--k", "300",
            "--snr-db", "0,6", "--seed", "2", "--out", out,
        ])
        assert code == EXIT_OK
        printed = capsys.readouterr().out
        assert "J=3" in printed and "J=6" in printed
        summary = read(os.path.join(out, "info_rate.csv"))
        lines = [l for l in summary.splitlines() if not l.startswith("#")]
        assert lines[0] == "snr_db,info_rate_per_symbol,stderr,l,j,k"
        assert len(lines) == 3
        assert (tmp_path / "ir" / "info_rate_trace_snr00.csv").exists()

    def test_every_numeric_knob_lands_in_manifest(self, tmp_path):
        out = str(tmp_path / "m")
        assert main(["oracle", "--m", "2", "--out", out]) == EXIT_OK
        manifest = read(os.path.join(out, "manifest.txt"))
        for field in ("command", "m", "strip_width", "constraint", "k", "l",
                      "paths", "burn_in", "thinning", "seed", "snr_db", "j",
                      "alpha_schedule", "out_dir"):
            assert f"{field} = " in manifest


class TestRunConfigValidation:
    def test_defaults_valid(self):
        cfg = RunConfig(command="capacity")
        cfg.validate()

    @pytest.mark.parametrize(
        "field,value",
        [("k", 0), ("l", 0), ("paths", 0), ("thinning", 0), ("j", -1),
         ("seed", -1), ("m", 0)],
    )
    def test_bad_values_name_the_field(self, field, value):
        cfg = RunConfig(command="capacity")
        setattr(cfg, field, value)
        with pytest.raises(CliValidationError):
            cfg.validate()

    def test_empty_snr_rejected(self):
        cfg = RunConfig(command="info-rate", snr_db=[])
        with pytest.raises(CliValidationError) as err:
            cfg.validate()
        assert err.value.option == "snr-db"
