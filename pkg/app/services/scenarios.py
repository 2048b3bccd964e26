"""
HomodyneQKD — Scenarios
Loading scenario files, running them end to end, parameter sweeps and the
flat-file outputs (report.json, histogram.csv, peaks.csv, sweep.csv).
"""
import asyncio
import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from app.core.config import settings
from app.core.errors import ConfigError, SessionAborted
from app.schemas.schemas import (
    AliceConfig,
    BobConfig,
    ChannelConfig,
    OpticalConstants,
    ScenarioConfig,
    SessionReport,
)
from app.services import analysis
from app.services.channel import transmittance
from app.services.optics import dbm_to_photons_per_pulse
from app.services.session import SessionOutcome, simulate_session
from app.services.transport import socket_pair
from app.utils.seeding import point_seed

logger = logging.getLogger(__name__)

BUNDLED_DIR = Path(__file__).resolve().parent.parent / "scenarios"
TRANSPORTS = ("queue", "socket")

# Fields a sweep may not vary: they name the run rather than parameterise it.
_UNSWEEPABLE = {"name", "out_dir", "seed"}


@dataclass(frozen=True)
class ScenarioResult:
    report: SessionReport
    histogram: analysis.Histogram
    peaks: analysis.PeakSummary
    paths: Dict[str, Path]


# ── Loading ──────────────────────────────────────────────────────────────────
def bundled_scenarios() -> List[str]:
    return sorted(p.stem for p in BUNDLED_DIR.glob("*.json"))


def load_scenario(ref: str) -> ScenarioConfig:
    """Load a scenario from a JSON file path, or by bundled name."""
    path = Path(ref)
    if not path.is_file():
        bundled = BUNDLED_DIR / f"{ref}.json"
        if not bundled.is_file():
            raise FileNotFoundError(f"no scenario file or bundled scenario named {ref!r}")
        path = bundled
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: a scenario is a single flat JSON object")
    data.setdefault("name", path.stem)
    return ScenarioConfig.model_validate(data)


def build_configs(cfg: ScenarioConfig) -> Tuple[AliceConfig, BobConfig, ChannelConfig]:
    channel = ChannelConfig(
        mode=cfg.mode,
        length_km=cfg.length_km,
        loss_db_per_km=cfg.loss_db_per_km,
        excess_loss_db=cfg.excess_loss_db,
        pol_overlap=cfg.pol_overlap,
        linewidth_hz=cfg.linewidth_hz,
        delay_s=cfg.delay_s,
        slot_period_s=cfg.slot_period_s or 1.0 / cfg.rep_rate_hz,
    )

    mu_signal = cfg.mu_signal
    if mu_signal is None:
        # Received power is measured at Bob's input; back out what Alice launched.
        received = dbm_to_photons_per_pulse(
            cfg.received_power_dbm,
            OpticalConstants(wavelength_m=cfg.wavelength_m),
            cfg.rep_rate_hz,
        )
        span = transmittance(channel) * cfg.pol_overlap
        if span <= 0:
            raise ConfigError("received power cannot be referred back through a zero-transmission span")
        mu_signal = received / span

    alice = AliceConfig(mu_signal=mu_signal, mu_reference=cfg.mu_reference)
    bob = BobConfig(
        eta_det=cfg.eta_det,
        electronic_noise=cfg.electronic_noise,
        mu_reference_at_detector=cfg.mu_reference_at_detector,
        threshold_q0=cfg.threshold_q0,
    )
    return alice, bob, channel


# ── Running ──────────────────────────────────────────────────────────────────
async def simulate_scenario(
    cfg: ScenarioConfig,
    transport: str = "queue",
    include_slots: Optional[bool] = None,
) -> SessionOutcome:
    if transport not in TRANSPORTS:
        raise ConfigError(f"transport must be one of {TRANSPORTS}, got {transport!r}")
    alice, bob, channel = build_configs(cfg)
    args = (alice, bob, channel, cfg.n_pulses, cfg.sample_fraction, cfg.seed)
    if transport == "socket":
        async with socket_pair() as pair:
            return await simulate_session(*args, transport=pair, scenario=cfg.name,
                                          include_slots=include_slots)
    return await simulate_session(*args, scenario=cfg.name, include_slots=include_slots)


def write_report(path: Path, report: SessionReport) -> None:
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")


def write_histogram_csv(path: Path, hist: analysis.Histogram) -> None:
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["bin_center", "count"])
        for center, count in zip(hist.bin_centers.tolist(), hist.counts.tolist()):
            writer.writerow([center, count])


def write_peaks_csv(path: Path, peaks: analysis.PeakSummary) -> None:
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["group", "count", "mean", "var", "weight"])
        for g in peaks.groups:
            writer.writerow([
                g.group,
                g.count,
                "" if g.mean is None else g.mean,
                "" if g.var is None else g.var,
                g.weight,
            ])


def run_scenario(
    cfg: ScenarioConfig,
    out_dir: Optional[Path] = None,
    transport: str = "queue",
) -> ScenarioResult:
    """Run one scenario and write report.json, histogram.csv and peaks.csv."""
    out = Path(out_dir or cfg.out_dir)
    outcome = asyncio.run(simulate_scenario(cfg, transport=transport))
    report = outcome.report

    hist = analysis.histogram(
        outcome.records.q, cfg.bin_width, analysis.default_range(report.mu_eff),
    )
    peaks = analysis.peak_summary(outcome.records, outcome.frame.symbols)

    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "histogram": out / "histogram.csv",
        "peaks": out / "peaks.csv",
    }
    write_report(paths["report"], report)
    write_histogram_csv(paths["histogram"], hist)
    write_peaks_csv(paths["peaks"], peaks)
    logger.info(f"Scenario {cfg.name or '<inline>'} written to {out}")
    return ScenarioResult(report=report, histogram=hist, peaks=peaks, paths=paths)


# ── Sweeps ───────────────────────────────────────────────────────────────────
SWEEP_HEADER = [
    "point", "param", "value", "seed", "status",
    "mu_eff", "n_key_bits", "key_rate", "qber_estimate", "qber_theory",
]


def sweep_point_config(cfg: ScenarioConfig, param: str, value: str, index: int) -> ScenarioConfig:
    if param not in ScenarioConfig.model_fields or param in _UNSWEEPABLE:
        raise ConfigError(f"cannot sweep {param!r}")
    data = cfg.model_dump()
    data[param] = value
    data["seed"] = point_seed(cfg.seed, index)
    # The two ways of giving the signal level are exclusive.
    if param == "mu_signal":
        data["received_power_dbm"] = None
    elif param == "received_power_dbm":
        data["mu_signal"] = None
    return ScenarioConfig.model_validate(data)


def _run_point(index: int, param: str, value: str, cfg: ScenarioConfig) -> list:
    try:
        outcome = asyncio.run(simulate_scenario(cfg, include_slots=False))
    except SessionAborted as e:
        logger.warning(f"Sweep point {index} ({param}={value}) aborted: {e.reason}")
        return [index, param, value, cfg.seed, f"aborted: {e.reason}", "", "", "", "", ""]
    r = outcome.report
    logger.info(f"Sweep point {index}: {param}={value} QBER={r.qber_estimate:.5f}")
    return [
        index, param, value, cfg.seed, "ok",
        r.mu_eff, r.n_key_bits, r.n_key_bits / r.n_pulses, r.qber_estimate, r.qber_theory,
    ]


def run_sweep(
    cfg: ScenarioConfig,
    param: str,
    values: Sequence[str],
    out_dir: Optional[Path] = None,
    workers: Optional[int] = None,
) -> Path:
    """
    Run one session per value of `param`, point i seeded with seed + i, and
    write sweep.csv. Points run in parallel up to QKD_SIM_THREADS workers.
    """
    if not values:
        raise ConfigError("a sweep needs at least one value")
    points = [sweep_point_config(cfg, param, v, i) for i, v in enumerate(values)]
    workers = max(1, min(workers or settings.sweep_workers, len(points)))

    if workers == 1:
        rows = [_run_point(i, param, v, p) for i, (v, p) in enumerate(zip(values, points))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_point, range(len(points)), [param] * len(points), values, points))

    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        writer.writerows(rows)
    logger.info(f"Sweep over {param} ({len(points)} points, {workers} workers) written to {path}")
    return path
