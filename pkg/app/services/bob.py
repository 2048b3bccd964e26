"""
HomodyneQKD — Bob
Basis modulation, balanced homodyne quadrature sampling in shot-noise
units and the bit decision with optional postselection.

Convention: vacuum quadrature variance is 1 and a coherent pulse of
amplitude α measured at relative phase Δφ has mean 2|α|cos Δφ.
"""
import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from app.core.errors import ConfigError
from app.schemas.schemas import BobConfig
from app.services.channel import PropagatedFrame
from app.services.optics import phase_shift, photon_number

logger = logging.getLogger(__name__)


class Decision(IntEnum):
    INCONCLUSIVE = -1
    BIT0 = 0
    BIT1 = 1


@dataclass(frozen=True)
class DetectionRecord:
    slot_index: int
    bob_basis: int
    q: float
    decision: Decision


@dataclass(frozen=True)
class DetectionRecords:
    """Bob's per-slot results, column-wise."""

    bob_basis: NDArray[np.uint8]
    q: NDArray[np.float64]
    decision: NDArray[np.int8]

    def __len__(self) -> int:
        return int(self.q.size)

    def __getitem__(self, i: int) -> DetectionRecord:
        return DetectionRecord(
            slot_index=int(i),
            bob_basis=int(self.bob_basis[i]),
            q=float(self.q[i]),
            decision=Decision(int(self.decision[i])),
        )

    @property
    def slot_index(self) -> NDArray[np.int64]:
        return np.arange(len(self), dtype=np.int64)

    @property
    def phi_b(self) -> NDArray[np.float64]:
        return basis_phase(self.bob_basis)

    @property
    def conclusive(self) -> NDArray[np.bool_]:
        return self.decision != Decision.INCONCLUSIVE


def basis_phase(bases: ArrayLike) -> NDArray[np.float64]:
    """Φ_B = basis·π/2."""
    return np.asarray(bases, dtype=np.float64) * (math.pi / 2.0)


def choose_bases(rng: np.random.Generator, n: int) -> NDArray[np.uint8]:
    if n < 0:
        raise ConfigError(f"basis count must be non-negative, got {n}")
    return rng.integers(0, 2, size=n, dtype=np.uint8)


def noise_variance(
    cfg: BobConfig,
    mu_reference: Optional[ArrayLike] = None,
) -> Union[float, NDArray[np.float64]]:
    """
    Total quadrature variance 1 + N_el/μ_ref. The electronic term shrinks as
    the reference grows (mixing gain).
    """
    if cfg.electronic_noise == 0:
        if mu_reference is None:
            return 1.0
        return np.ones(np.shape(mu_reference))
    mu_ref = cfg.mu_reference_at_detector if mu_reference is None else np.asarray(mu_reference)
    if np.any(np.asarray(mu_ref) <= 0):
        raise ConfigError("reference photon number at the detector must be positive")
    return 1.0 + cfg.electronic_noise / mu_ref


def homodyne_sample(
    signal: ArrayLike,
    theta_diff: ArrayLike,
    phi_b: ArrayLike,
    cfg: BobConfig,
    rng: np.random.Generator,
    mu_reference: Optional[ArrayLike] = None,
    size: Optional[int] = None,
):
    """
    q = 2√η·Re[signal·exp(−j(φ_B − θ))] + n, n ~ N(0, 1 + N_el/μ_ref).

    Inputs broadcast; `size` draws that many samples of a single slot.
    """
    signal = np.asarray(signal, dtype=np.complex128)
    relative = np.asarray(phi_b, dtype=np.float64) - np.asarray(theta_diff, dtype=np.float64)
    mean = 2.0 * math.sqrt(cfg.eta_det) * np.real(phase_shift(signal, relative))

    shape = np.shape(mean) if size is None else size
    sigma = np.sqrt(noise_variance(cfg, mu_reference))
    q = mean + sigma * rng.standard_normal(shape)
    if np.ndim(q) == 0:
        return float(q)
    return q


def decide(q: float, threshold_q0: float) -> Decision:
    """q > q0 → Bit0, q < −q0 → Bit1, anything else is inconclusive."""
    if threshold_q0 < 0:
        raise ConfigError(f"threshold must be non-negative, got {threshold_q0}")
    if q > threshold_q0:
        return Decision.BIT0
    if q < -threshold_q0:
        return Decision.BIT1
    return Decision.INCONCLUSIVE


def decide_array(q: NDArray[np.float64], threshold_q0: float) -> NDArray[np.int8]:
    if threshold_q0 < 0:
        raise ConfigError(f"threshold must be non-negative, got {threshold_q0}")
    decision = np.full(q.shape, Decision.INCONCLUSIVE, dtype=np.int8)
    decision[q > threshold_q0] = Decision.BIT0
    decision[q < -threshold_q0] = Decision.BIT1
    return decision


def measure_frame(
    pframe: PropagatedFrame,
    bases: NDArray[np.uint8],
    cfg: BobConfig,
    rng: np.random.Generator,
) -> DetectionRecords:
    if len(bases) != len(pframe):
        raise ConfigError(f"{len(bases)} bases for a frame of {len(pframe)} slots")

    bases = np.asarray(bases, dtype=np.uint8)
    # The delayed architecture carries its own strong pulse; two_fiber uses the configured one.
    mu_reference = None if pframe.reference is None else photon_number(pframe.reference)

    q = homodyne_sample(
        pframe.signal,
        pframe.theta_diff,
        basis_phase(bases),
        cfg,
        rng,
        mu_reference=mu_reference,
    )
    q = np.atleast_1d(q)
    decision = decide_array(q, cfg.threshold_q0)
    logger.debug(
        f"Measured {len(q)} slots: {int(np.sum(decision == Decision.INCONCLUSIVE))} inconclusive"
    )
    return DetectionRecords(bob_basis=bases, q=q, decision=decision)
