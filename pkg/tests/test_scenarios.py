"""Scenario loading, end-to-end runs, report files and sweeps."""
import csv
import json

import pytest
from pydantic import ValidationError

from app.core.errors import ConfigError
from app.schemas.schemas import ChannelMode, ScenarioConfig
from app.services import scenarios
from app.services.analysis import histogram, theoretical_qber
from app.services.channel import transmittance

from tests.conftest import three_se_mean


def _override(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    return ScenarioConfig.model_validate({**cfg.model_dump(), **changes})


@pytest.fixture
def small_self_homodyne():
    cfg = scenarios.load_scenario("self-homodyne-47dbm")
    return _override(cfg, mu_signal=4.0, received_power_dbm=None, n_pulses=4000)


class TestLoading:
    def test_bundled_names(self):
        assert {"self-homodyne-47dbm", "delayed-11km"} <= set(scenarios.bundled_scenarios())

    def test_load_by_name_and_path(self):
        by_name = scenarios.load_scenario("delayed-11km")
        by_path = scenarios.load_scenario(str(scenarios.BUNDLED_DIR / "delayed-11km.json"))
        assert by_name == by_path
        assert by_name.mode == ChannelMode.SINGLE_FIBER_DELAYED

    def test_name_defaults_to_file_stem(self, tmp_path):
        path = tmp_path / "mine.json"
        path.write_text(json.dumps({"mu_signal": 1.0}))
        assert scenarios.load_scenario(str(path)).name == "mine"

    def test_missing(self):
        with pytest.raises(FileNotFoundError):
            scenarios.load_scenario("no-such-scenario")

    @pytest.mark.parametrize("text", ["{broken", "[1, 2]"])
    def test_not_a_scenario_object(self, tmp_path, text):
        path = tmp_path / "bad.json"
        path.write_text(text)
        with pytest.raises(ConfigError):
            scenarios.load_scenario(str(path))

    @pytest.mark.parametrize("data", [
        {"mu_signal": 1.0, "received_power_dbm": -47.0},
        {},
        {"mu_signal": 1.0, "mode": "single_fiber_delayed"},
        {"mu_signal": 1.0, "colour": "blue"},
        {"mu_signal": 1.0, "seed": -1},
        {"mu_signal": 1.0, "sample_fraction": 1.0},
        {"mu_signal": 1.0, "mode": "single_fiber_delayed", "mu_reference": 1e6, "pol_overlap": 0.0},
    ])
    def test_invalid_configs(self, data):
        with pytest.raises(ValidationError):
            ScenarioConfig.model_validate(data)

    def test_received_power_is_referred_to_the_launch(self):
        cfg = scenarios.load_scenario("self-homodyne-47dbm")
        alice, _, _ = scenarios.build_configs(cfg)
        assert alice.mu_signal == pytest.approx(155.0, abs=0.1)

        lossy = _override(cfg, length_km=11.0)
        alice, _, channel = scenarios.build_configs(lossy)
        assert alice.mu_signal * transmittance(channel) == pytest.approx(155.0, abs=0.1)


class TestRunScenario:
    def test_self_homodyne_three_peaks(self, tmp_out):
        cfg = _override(scenarios.load_scenario("self-homodyne-47dbm"), mu_signal=4.0, received_power_dbm=None)
        result = scenarios.run_scenario(cfg, out_dir=tmp_out)
        assert result.report.mu_eff == pytest.approx(4.0)
        for name, weight, mean in (("coincidence-bit0", 0.25, 4.0),
                                   ("anti-coincidence", 0.5, 0.0),
                                   ("coincidence-bit1", 0.25, -4.0)):
            g = result.peaks.group(name)
            assert abs(g.weight - weight) < 0.02
            assert abs(g.mean - mean) < 3 * (g.var / g.count) ** 0.5

    @pytest.mark.asyncio
    async def test_quadratures_are_symmetric_about_zero(self):
        cfg = _override(scenarios.load_scenario("self-homodyne-47dbm"), mu_signal=4.0, received_power_dbm=None,
                        n_pulses=50_000)
        outcome = await scenarios.simulate_scenario(cfg, include_slots=False)
        q = outcome.records.q
        assert abs(q.mean()) < three_se_mean(q)
        # Mirrored bins hold matching mass.
        hist = histogram(q, 1.0, (-12.0, 12.0))
        left, right = hist.counts[:12].sum(), hist.counts[12:].sum()
        assert abs(left - right) < 3 * (left + right) ** 0.5

    def test_output_files(self, small_self_homodyne, tmp_out):
        result = scenarios.run_scenario(small_self_homodyne, out_dir=tmp_out)
        report = json.loads((tmp_out / "report.json").read_text())
        assert report["scenario"] == "self-homodyne-47dbm"
        assert report["n_key_bits"] == result.report.n_key_bits
        assert len(report["slots"]) == 4000

        with (tmp_out / "histogram.csv").open() as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["bin_center", "count"]
        total = sum(int(r[1]) for r in rows[1:])
        assert total + result.histogram.underflow + result.histogram.overflow == 4000

        with (tmp_out / "peaks.csv").open() as f:
            rows = list(csv.DictReader(f))
        assert [r["group"] for r in rows] == ["coincidence-bit0", "coincidence-bit1", "anti-coincidence"]

    def test_byte_identical_reruns(self, small_self_homodyne, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        scenarios.run_scenario(small_self_homodyne, out_dir=a)
        scenarios.run_scenario(small_self_homodyne, out_dir=b)
        for name in ("report.json", "histogram.csv", "peaks.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_socket_transport_gives_the_same_report(self, small_self_homodyne, tmp_path):
        queue = scenarios.run_scenario(small_self_homodyne, out_dir=tmp_path / "q")
        sock = scenarios.run_scenario(small_self_homodyne, out_dir=tmp_path / "s", transport="socket")
        assert queue.report == sock.report

    def test_unknown_transport(self, small_self_homodyne, tmp_out):
        with pytest.raises(ConfigError):
            scenarios.run_scenario(small_self_homodyne, out_dir=tmp_out, transport="carrier-pigeon")

    def test_delayed_11km(self, tmp_out):
        cfg = scenarios.load_scenario("delayed-11km")
        _, _, channel = scenarios.build_configs(cfg)
        assert transmittance(channel) == pytest.approx(0.60256, abs=5e-6)

        result = scenarios.run_scenario(cfg, out_dir=tmp_out)
        report = result.report
        assert report.mode == ChannelMode.SINGLE_FIBER_DELAYED
        assert report.mu_eff == pytest.approx(10.0 * 0.60256, rel=1e-5)
        assert report.n_key_bits > 40_000
        assert report.qber_estimate < 0.01
        assert report.qber_theory == pytest.approx(theoretical_qber(report.mu_eff, 1.0))


class TestSweep:
    def test_rows_and_seeds(self, small_self_homodyne, tmp_out):
        path = scenarios.run_sweep(small_self_homodyne, "mu_signal", ["0.25", "1", "4"], out_dir=tmp_out, workers=1)
        with path.open() as f:
            rows = list(csv.DictReader(f))
        assert list(rows[0].keys()) == scenarios.SWEEP_HEADER
        assert [r["value"] for r in rows] == ["0.25", "1", "4"]
        assert [int(r["seed"]) for r in rows] == [2006, 2007, 2008]
        assert all(r["status"] == "ok" for r in rows)
        assert [float(r["mu_eff"]) for r in rows] == pytest.approx([0.25, 1.0, 4.0])
        for r in rows:
            assert float(r["key_rate"]) == pytest.approx(int(r["n_key_bits"]) / 4000)

    def test_parallel_matches_serial(self, small_self_homodyne, tmp_path):
        values = ["1", "2", "3", "4"]
        serial = scenarios.run_sweep(small_self_homodyne, "mu_signal", values, out_dir=tmp_path / "s", workers=1)
        parallel = scenarios.run_sweep(small_self_homodyne, "mu_signal", values, out_dir=tmp_path / "p", workers=4)
        assert serial.read_bytes() == parallel.read_bytes()

    def test_sweeping_power_replaces_mu(self, small_self_homodyne):
        point = scenarios.sweep_point_config(small_self_homodyne, "received_power_dbm", "-50", 0)
        assert point.mu_signal is None and point.received_power_dbm == -50.0

    @pytest.mark.parametrize("param", ["seed", "name", "out_dir", "bogus"])
    def test_rejected_params(self, small_self_homodyne, tmp_out, param):
        with pytest.raises(ConfigError):
            scenarios.run_sweep(small_self_homodyne, param, ["1"], out_dir=tmp_out)

    def test_no_values(self, small_self_homodyne, tmp_out):
        with pytest.raises(ConfigError):
            scenarios.run_sweep(small_self_homodyne, "mu_signal", [], out_dir=tmp_out)
