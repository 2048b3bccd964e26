"""
HomodyneQKD — Optics
Field-level primitives shared by Alice, the channel and Bob: modulator
transfer functions, attenuation, laser phase drift and power conversions.

Fields are complex envelopes in √photon units, so |E|² is the mean photon
number of the pulse. Every function accepts a Python complex or a numpy
array of them.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from app.core.errors import ConfigError
from app.schemas.schemas import OpticalConstants

logger = logging.getLogger(__name__)

ComplexAmplitude = Union[complex, NDArray[np.complex128]]


def photon_number(e: ComplexAmplitude) -> Union[float, NDArray[np.float64]]:
    """Mean photon number |E|² of a pulse."""
    return np.abs(e) ** 2


def mzm_dual_drive(e_in: ComplexAmplitude, phi1: ArrayLike, phi2: ArrayLike) -> ComplexAmplitude:
    """
    Dual-electrode Mach-Zehnder transfer:
    E_out = E_in · cos((φ1 − φ2)/2) · exp(j(φ1 + φ2)/2).
    """
    phi1 = np.asarray(phi1, dtype=np.float64)
    phi2 = np.asarray(phi2, dtype=np.float64)
    return e_in * np.cos((phi1 - phi2) / 2.0) * np.exp(1j * (phi1 + phi2) / 2.0)


def phase_shift(e: ComplexAmplitude, phi_b: ArrayLike) -> ComplexAmplitude:
    """Single-electrode phase modulator, E · exp(−jφ_B)."""
    return e * np.exp(-1j * np.asarray(phi_b, dtype=np.float64))


def attenuate(e: ComplexAmplitude, loss_db: float) -> ComplexAmplitude:
    """Scale the field by 10^(−loss/20); photon number falls by 10^(−loss/10)."""
    if loss_db < 0:
        raise ConfigError(f"loss must be non-negative, got {loss_db} dB")
    return e * 10.0 ** (-loss_db / 20.0)


def dbm_to_watts(p_dbm: float) -> float:
    return 1e-3 * 10.0 ** (p_dbm / 10.0)


def dbm_to_photons_per_pulse(
    p_dbm: float,
    constants: OpticalConstants,
    rep_rate_hz: float,
) -> float:
    """Mean photons per pulse carried by an average optical power at a given pulse rate."""
    if rep_rate_hz <= 0:
        raise ConfigError(f"repetition rate must be positive, got {rep_rate_hz} Hz")
    return dbm_to_watts(p_dbm) / (rep_rate_hz * constants.photon_energy_j)


# ── Phase drift ──────────────────────────────────────────────────────────────
@dataclass
class PhaseDriftProcess:
    """
    Wiener phase noise with increments of variance 2π·Δν·dt.

    The process owns its random stream; it must not be shared between
    concurrent users.
    """

    linewidth_hz: float
    rng: np.random.Generator = field(repr=False)
    current_phase_rad: float = 0.0
    elapsed_s: float = 0.0

    def __post_init__(self):
        if self.linewidth_hz < 0 or not math.isfinite(self.linewidth_hz):
            raise ConfigError(f"linewidth must be finite and non-negative, got {self.linewidth_hz}")

    def step_variance(self, dt: ArrayLike) -> Union[float, NDArray[np.float64]]:
        return 2.0 * math.pi * self.linewidth_hz * np.asarray(dt, dtype=np.float64)

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ConfigError(f"time step must be non-negative, got {dt}")
        delta = self.rng.normal(0.0, math.sqrt(self.step_variance(dt)))
        self.current_phase_rad += float(delta)
        self.elapsed_s += dt
        return self.current_phase_rad

    def sample_at(self, times_s: ArrayLike) -> NDArray[np.float64]:
        """
        Phase at each of the non-decreasing absolute times (seconds since the
        process started). The process is left at the last time.
        """
        times = np.asarray(times_s, dtype=np.float64)
        if times.size == 0:
            return np.empty(0, dtype=np.float64)
        steps = np.diff(times, prepend=self.elapsed_s)
        if np.any(steps < 0):
            raise ConfigError("drift sample times must be non-decreasing and not in the past")

        increments = self.rng.normal(0.0, np.sqrt(self.step_variance(steps)))
        phases = self.current_phase_rad + np.cumsum(increments)

        self.current_phase_rad = float(phases[-1])
        self.elapsed_s = float(times[-1])
        return phases


def advance_drift(p: PhaseDriftProcess, dt: float) -> float:
    """Advance the drift process by dt seconds and return its new phase."""
    return p.advance(dt)
