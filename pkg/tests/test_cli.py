"""Command line: verbs, outputs and exit codes."""
import csv
import json

import pytest

from app import cli
from app.core.errors import SessionAborted
from app.services import scenarios, selftest


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps({
        "mu_signal": 2.0,
        "linewidth_hz": 0.0,
        "n_pulses": 2000,
        "sample_fraction": 0.2,
        "seed": 41,
        "out_dir": str(tmp_path / "default-out"),
    }))
    return path


class TestRun:
    def test_writes_outputs(self, scenario_file, tmp_out, capsys):
        assert cli.main(["run", "--config", str(scenario_file), "--out", str(tmp_out)]) == cli.EXIT_OK
        for name in ("report.json", "histogram.csv", "peaks.csv"):
            assert (tmp_out / name).is_file()
        assert "key bits" in capsys.readouterr().out

    def test_seed_override(self, scenario_file, tmp_out):
        cli.main(["run", "--config", str(scenario_file), "--out", str(tmp_out), "--seed", "99"])
        report = json.loads((tmp_out / "report.json").read_text())
        assert report["seed"] == 99 and report["session_id"] == 99

    def test_default_out_dir_from_scenario(self, scenario_file, tmp_path):
        assert cli.main(["run", "--config", str(scenario_file)]) == cli.EXIT_OK
        assert (tmp_path / "default-out" / "report.json").is_file()

    def test_socket_transport(self, scenario_file, tmp_path):
        cli.main(["run", "--config", str(scenario_file), "--out", str(tmp_path / "q")])
        cli.main(["run", "--config", str(scenario_file), "--out", str(tmp_path / "s"), "--transport", "socket"])
        assert (tmp_path / "q" / "report.json").read_bytes() == (tmp_path / "s" / "report.json").read_bytes()

    def test_missing_config_is_io_error(self, tmp_out):
        assert cli.main(["run", "--config", "does-not-exist", "--out", str(tmp_out)]) == cli.EXIT_IO

    def test_invalid_config(self, tmp_path, tmp_out):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"mu_signal": 1.0, "received_power_dbm": -40.0}))
        assert cli.main(["run", "--config", str(path), "--out", str(tmp_out)]) == cli.EXIT_CONFIG

    def test_seed_out_of_range(self, scenario_file, tmp_out):
        assert cli.main(["run", "--config", str(scenario_file), "--out", str(tmp_out),
                         "--seed", str(2**64)]) == cli.EXIT_CONFIG

    def test_abort(self, scenario_file, tmp_out, monkeypatch):
        def aborted(*args, **kwargs):
            raise SessionAborted("empty_sample: empty sifted key")
        monkeypatch.setattr(scenarios, "run_scenario", aborted)
        assert cli.main(["run", "--config", str(scenario_file), "--out", str(tmp_out)]) == cli.EXIT_ABORTED

    def test_missing_verb(self):
        with pytest.raises(SystemExit):
            cli.main([])


class TestSweep:
    def test_writes_sweep_csv(self, scenario_file, tmp_out):
        code = cli.main(["sweep", "--config", str(scenario_file), "--param", "length_km",
                         "--values", "0, 5, 10", "--out", str(tmp_out)])
        assert code == cli.EXIT_OK
        with (tmp_out / "sweep.csv").open() as f:
            rows = list(csv.DictReader(f))
        assert [r["value"] for r in rows] == ["0", "5", "10"]
        mu = [float(r["mu_eff"]) for r in rows]
        assert mu[0] > mu[1] > mu[2]

    def test_bad_param(self, scenario_file, tmp_out):
        code = cli.main(["sweep", "--config", str(scenario_file), "--param", "seed",
                         "--values", "1,2", "--out", str(tmp_out)])
        assert code == cli.EXIT_CONFIG


class TestSelftest:
    def test_passes(self, capsys):
        assert cli.main(["selftest"]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert out.count("PASS") == len(selftest.CHECKS)

    def test_failure_exit_code(self, monkeypatch):
        monkeypatch.setattr(selftest, "CHECKS", [("always fails", lambda: (False, "broken"))])
        assert cli.main(["selftest"]) == cli.EXIT_SELFTEST

    def test_crashing_check_is_a_failure(self, monkeypatch):
        def crash():
            raise RuntimeError("boom")
        monkeypatch.setattr(selftest, "CHECKS", [("crash", crash)])
        [result] = selftest.run_selftest()
        assert not result.passed and "boom" in result.detail
