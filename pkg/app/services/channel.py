"""
HomodyneQKD — Channel
Fiber propagation for the two architectures:

- two_fiber: signal and reference in separate fibers, each with its own
  phase drift;
- single_fiber_delayed: reference pulses time-multiplexed with the signal in
  one fiber, so both see the same drift sampled `delay_s` apart.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from app.core.errors import ConfigError
from app.schemas.schemas import ChannelConfig, ChannelMode
from app.services.alice import PulseFrame
from app.services.optics import PhaseDriftProcess

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PropagatedFrame:
    mode: ChannelMode
    signal: NDArray[np.complex128]
    reference: Optional[NDArray[np.complex128]]
    theta_signal: NDArray[np.float64]
    theta_reference: NDArray[np.float64]

    def __len__(self) -> int:
        return int(self.signal.size)

    @property
    def theta_diff(self) -> NDArray[np.float64]:
        return self.theta_signal - self.theta_reference


def transmittance(cfg: ChannelConfig) -> float:
    """Power transmittance of the span, fiber loss plus lumped excess loss."""
    loss_db = cfg.length_km * cfg.loss_db_per_km + cfg.excess_loss_db
    return 10.0 ** (-loss_db / 10.0)


def _delayed_drift(process: PhaseDriftProcess, times: NDArray[np.float64], delay_s: float):
    # One Wiener path sampled at both the signal and the reference instants.
    n = times.size
    all_times = np.concatenate([times, times + delay_s])
    order = np.argsort(all_times, kind="stable")
    theta = np.empty_like(all_times)
    theta[order] = process.sample_at(all_times[order])
    return theta[:n], theta[n:]


def propagate(frame: PulseFrame, cfg: ChannelConfig, rng: np.random.Generator) -> PropagatedFrame:
    if frame.mode != cfg.mode:
        raise ConfigError(
            f"frame was built for {frame.mode.value} but the channel is {cfg.mode.value}"
        )

    transmission = transmittance(cfg)
    scale = math.sqrt(transmission * cfg.pol_overlap)
    signal = frame.signal * scale
    reference = frame.reference * scale if frame.reference is not None else None

    times = np.arange(len(frame), dtype=np.float64) * cfg.slot_period_s
    if cfg.mode == ChannelMode.TWO_FIBER:
        theta_signal = PhaseDriftProcess(cfg.linewidth_hz, rng).sample_at(times)
        theta_reference = PhaseDriftProcess(cfg.linewidth_hz, rng).sample_at(times)
    else:
        process = PhaseDriftProcess(cfg.linewidth_hz, rng)
        theta_signal, theta_reference = _delayed_drift(process, times, cfg.delay_s)

    logger.debug(
        f"Propagated {len(frame)} slots over {cfg.length_km} km ({cfg.mode.value}): "
        f"T={transmission:.5f}, residual phase std="
        f"{float(np.std(theta_signal - theta_reference)):.4f} rad"
    )
    return PropagatedFrame(
        mode=cfg.mode,
        signal=signal,
        reference=reference,
        theta_signal=theta_signal,
        theta_reference=theta_reference,
    )
