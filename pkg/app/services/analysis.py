"""
HomodyneQKD — Analysis
Histogramming of homodyne samples, the three-peak summary of coincidence
and anti-coincidence slots, and closed-form QBER oracles.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import erfc

from app.core.errors import ConfigError
from app.schemas.schemas import AliceConfig, BobConfig, ChannelConfig, ChannelMode, PeakGroup
from app.services.alice import SymbolStream
from app.services.bob import DetectionRecords, noise_variance
from app.services.channel import transmittance

logger = logging.getLogger(__name__)

GROUPS = ("coincidence-bit0", "coincidence-bit1", "anti-coincidence")


@dataclass(frozen=True)
class Histogram:
    bin_edges: NDArray[np.float64]
    counts: NDArray[np.int64]
    n_total: int
    underflow: int
    overflow: int

    @property
    def bin_centers(self) -> NDArray[np.float64]:
        return (self.bin_edges[:-1] + self.bin_edges[1:]) / 2.0


@dataclass(frozen=True)
class PeakSummary:
    groups: List[PeakGroup]

    def group(self, name: str) -> PeakGroup:
        for g in self.groups:
            if g.group == name:
                return g
        raise KeyError(name)


def histogram(samples: ArrayLike, bin_width: float, value_range: Tuple[float, float]) -> Histogram:
    """
    Uniform bins [lo + k·w, lo + (k+1)·w) covering [lo, hi). When the range
    is not a whole number of bins the last one is cut short at hi. Samples
    below lo go to underflow, samples at or above hi to overflow.
    """
    lo, hi = float(value_range[0]), float(value_range[1])
    if not bin_width > 0 or not math.isfinite(bin_width):
        raise ConfigError(f"bin width must be positive, got {bin_width}")
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ConfigError(f"histogram range must be non-degenerate, got [{lo}, {hi})")

    n_bins = max(1, math.ceil((hi - lo) / bin_width - 1e-9))
    edges = lo + bin_width * np.arange(n_bins + 1, dtype=np.float64)
    edges[-1] = hi

    x = np.asarray(samples, dtype=np.float64).ravel()
    index = np.floor((x - lo) / bin_width).astype(np.int64)
    underflow = int(np.count_nonzero(x < lo))
    overflow = int(np.count_nonzero(x >= hi))
    inside = np.minimum(index[(x >= lo) & (x < hi)], n_bins - 1)
    counts = np.bincount(inside, minlength=n_bins).astype(np.int64)

    return Histogram(
        bin_edges=edges,
        counts=counts,
        n_total=int(x.size),
        underflow=underflow,
        overflow=overflow,
    )


def peak_summary(records: DetectionRecords, alice_symbols: SymbolStream) -> PeakSummary:
    """Mean, variance and weight of q for each ground-truth group."""
    if len(records) != len(alice_symbols):
        raise ConfigError(f"{len(records)} records against {len(alice_symbols)} symbols")
    n = len(records)
    if n == 0:
        raise ConfigError("cannot summarise an empty run")

    matched = alice_symbols.bases == records.bob_basis
    masks = {
        "coincidence-bit0": matched & (alice_symbols.bits == 0),
        "coincidence-bit1": matched & (alice_symbols.bits == 1),
        "anti-coincidence": ~matched,
    }

    groups = []
    for name in GROUPS:
        q = records.q[masks[name]]
        count = int(q.size)
        groups.append(PeakGroup(
            group=name,
            count=count,
            mean=float(np.mean(q)) if count else None,
            var=float(np.var(q, ddof=1)) if count > 1 else (0.0 if count else None),
            weight=count / n,
        ))
    return PeakSummary(groups=groups)


# ── Analytic oracles ─────────────────────────────────────────────────────────
def theoretical_qber(mu_eff: float, sigma_sq: float) -> float:
    """½·erfc(2√μ / √(2σ²)): sign error of an antipodal Gaussian decision."""
    if mu_eff < 0:
        raise ConfigError(f"mu_eff must be non-negative, got {mu_eff}")
    if sigma_sq <= 0:
        raise ConfigError(f"noise variance must be positive, got {sigma_sq}")
    return float(0.5 * erfc(2.0 * math.sqrt(mu_eff) / math.sqrt(2.0 * sigma_sq)))


def _gaussian_tail(x: float) -> float:
    return float(0.5 * erfc(x / math.sqrt(2.0)))


def theoretical_postselection(mu_eff: float, sigma_sq: float, threshold_q0: float) -> Tuple[float, float]:
    """(QBER among conclusive slots, conclusive fraction) with dead zone |q| ≤ q0."""
    if threshold_q0 < 0:
        raise ConfigError(f"threshold must be non-negative, got {threshold_q0}")
    if threshold_q0 == 0:
        return theoretical_qber(mu_eff, sigma_sq), 1.0
    if sigma_sq <= 0:
        raise ConfigError(f"noise variance must be positive, got {sigma_sq}")

    mean = 2.0 * math.sqrt(mu_eff)
    sigma = math.sqrt(sigma_sq)
    p_right = _gaussian_tail((threshold_q0 - mean) / sigma)
    p_wrong = _gaussian_tail((threshold_q0 + mean) / sigma)
    conclusive = p_right + p_wrong
    if conclusive == 0:
        return 0.5, 0.0
    return p_wrong / conclusive, conclusive


def effective_mu(alice: AliceConfig, bob: BobConfig, channel: ChannelConfig) -> float:
    """Mean photons reaching the detection: η_det·η_pol·T·μ."""
    return bob.eta_det * channel.pol_overlap * transmittance(channel) * alice.mu_signal


def detector_variance(alice: AliceConfig, bob: BobConfig, channel: ChannelConfig) -> float:
    """Quadrature noise variance the run will see, shot noise plus electronic noise."""
    if channel.mode == ChannelMode.SINGLE_FIBER_DELAYED and alice.mu_reference is not None:
        mu_reference = alice.mu_reference * transmittance(channel) * channel.pol_overlap
        return float(noise_variance(bob, mu_reference))
    return float(noise_variance(bob))


def default_range(mu_eff: float) -> Tuple[float, float]:
    """±(4√μ + 4) around zero: ±4σ past the outer peaks."""
    half = 4.0 * math.sqrt(mu_eff) + 4.0
    return -half, half
