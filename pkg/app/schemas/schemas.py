"""
HomodyneQKD — Pydantic Schemas
Run configurations, the encoding table, classical-channel messages,
session reports and HTTP bodies.
"""
import cmath
import math
from enum import Enum
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, StrictInt, model_validator
from scipy.constants import Planck, speed_of_light

from app.core.config import settings

TWO_PI = 2.0 * math.pi
TABLE_TOLERANCE = 1e-12


class ChannelMode(str, Enum):
    TWO_FIBER = "two_fiber"
    SINGLE_FIBER_DELAYED = "single_fiber_delayed"


# ── Optics ───────────────────────────────────────────────────────────────────
class OpticalConstants(BaseModel):
    model_config = ConfigDict(frozen=True)

    wavelength_m: float = Field(default=settings.DEFAULT_WAVELENGTH_M, gt=0)
    planck_j_s: float = Field(default=Planck, gt=0)
    light_speed_m_s: float = Field(default=speed_of_light, gt=0)

    @property
    def photon_energy_j(self) -> float:
        return self.planck_j_s * self.light_speed_m_s / self.wavelength_m


# ── Alice ────────────────────────────────────────────────────────────────────
class EncodingRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    basis: int = Field(ge=0, le=1)
    bit: int = Field(ge=0, le=1)
    phi1: float = Field(description="Electrode 1 phase (rad)")
    phi2: float = Field(description="Electrode 2 phase (rad)")

    @property
    def envelope(self) -> float:
        return abs(math.cos((self.phi1 - self.phi2) / 2.0))

    @property
    def phase(self) -> float:
        """Phase of the field the modulator emits, folded into [0, 2π).

        Equals (phi1 + phi2) / 2 unless cos((phi1 − phi2) / 2) is negative,
        which adds π.
        """
        field = math.cos((self.phi1 - self.phi2) / 2.0) * cmath.exp(1j * (self.phi1 + self.phi2) / 2.0)
        return cmath.phase(field) % TWO_PI

    @property
    def target_phase(self) -> float:
        """bit·π + basis·π/2, the phase Bob's sign decision assumes."""
        return (self.bit * math.pi + self.basis * math.pi / 2.0) % TWO_PI


def _circular_distance(a: float, b: float) -> float:
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d)


class EncodingTable(BaseModel):
    """Dual-electrode drive phases for the four BB84 symbols."""

    model_config = ConfigDict(frozen=True)

    rows: List[EncodingRow] = Field(min_length=4, max_length=4)

    @model_validator(mode="after")
    def _check_invariants(self) -> "EncodingTable":
        keys = {(r.basis, r.bit) for r in self.rows}
        if len(keys) != 4:
            raise ValueError("encoding table must hold one row per (basis, bit)")

        envelope = self.rows[0].envelope
        if envelope < TABLE_TOLERANCE:
            raise ValueError("encoding table extinguishes the carrier")
        for row in self.rows:
            if abs(row.envelope - envelope) > TABLE_TOLERANCE:
                raise ValueError("encoding table breaks the constant-envelope condition")

        matched = set()
        for row in self.rows:
            for k in range(4):
                if _circular_distance(row.phase, k * math.pi / 2.0) < TABLE_TOLERANCE:
                    matched.add(k)
        if matched != {0, 1, 2, 3}:
            raise ValueError("encoding table phases are not the QPSK constellation")

        for row in self.rows:
            if _circular_distance(row.phase, row.target_phase) >= TABLE_TOLERANCE:
                raise ValueError(
                    f"encoding table row (basis={row.basis}, bit={row.bit}) emits phase "
                    f"{row.phase:.6f} rad, expected bit·π + basis·π/2"
                )
        return self

    @property
    def envelope(self) -> float:
        return self.rows[0].envelope

    def lookup(self, basis: int, bit: int) -> Tuple[float, float]:
        for row in self.rows:
            if row.basis == basis and row.bit == bit:
                return row.phi1, row.phi2
        raise KeyError((basis, bit))


class AliceConfig(BaseModel):
    mu_signal: float = Field(gt=0, description="Mean photons per signal pulse launched by Alice")
    mu_reference: Optional[float] = Field(
        default=None, gt=0, description="Mean photons per reference pulse (delayed mode)"
    )
    table: Optional[EncodingTable] = Field(
        default=None, description="Drive table; None selects the built-in table"
    )


# ── Channel ──────────────────────────────────────────────────────────────────
class ChannelConfig(BaseModel):
    mode: ChannelMode = ChannelMode.TWO_FIBER
    length_km: float = Field(default=0.0, ge=0)
    loss_db_per_km: float = Field(default=settings.DEFAULT_LOSS_DB_PER_KM, ge=0)
    excess_loss_db: float = Field(default=0.0, ge=0)
    pol_overlap: float = Field(default=1.0, ge=0, le=1)
    linewidth_hz: float = Field(default=settings.DEFAULT_LINEWIDTH_HZ, ge=0)
    delay_s: float = Field(default=settings.DEFAULT_DELAY_S, ge=0)
    slot_period_s: float = Field(default=1.0 / settings.DEFAULT_REP_RATE_HZ, gt=0)

    @model_validator(mode="after")
    def _check_reference_path(self) -> "ChannelConfig":
        if self.mode == ChannelMode.SINGLE_FIBER_DELAYED and self.pol_overlap == 0:
            raise ValueError("single_fiber_delayed mode needs pol_overlap > 0: the reference shares the signal fiber")
        return self


# ── Bob ──────────────────────────────────────────────────────────────────────
class BobConfig(BaseModel):
    eta_det: float = Field(default=1.0, gt=0, le=1)
    electronic_noise: float = Field(default=settings.DEFAULT_ELECTRONIC_NOISE, ge=0)
    mu_reference_at_detector: float = Field(default=settings.DEFAULT_MU_REFERENCE, gt=0)
    threshold_q0: float = Field(default=0.0, ge=0)


# ── Classical channel messages ───────────────────────────────────────────────
Unsigned = Annotated[StrictInt, Field(ge=0)]
Bit = Annotated[StrictInt, Field(ge=0, le=1)]

_MESSAGE_CONFIG = ConfigDict(extra="forbid", frozen=True, strict=True)


class BasisAnnounce(BaseModel):
    model_config = _MESSAGE_CONFIG

    type: Literal["basis_announce"] = "basis_announce"
    session_id: Unsigned
    first_slot: Unsigned
    bases: List[Bit]


class SiftResult(BaseModel):
    model_config = _MESSAGE_CONFIG

    type: Literal["sift_result"] = "sift_result"
    session_id: Unsigned
    kept_slots: List[Unsigned]


class SampleRequest(BaseModel):
    model_config = _MESSAGE_CONFIG

    type: Literal["sample_request"] = "sample_request"
    session_id: Unsigned
    slots: List[Unsigned]


class SampleReveal(BaseModel):
    model_config = _MESSAGE_CONFIG

    type: Literal["sample_reveal"] = "sample_reveal"
    session_id: Unsigned
    bits: List[Bit]


class Abort(BaseModel):
    model_config = _MESSAGE_CONFIG

    type: Literal["abort"] = "abort"
    session_id: Unsigned
    reason: str


Message = Annotated[
    Union[BasisAnnounce, SiftResult, SampleRequest, SampleReveal, Abort],
    Field(discriminator="type"),
]

MESSAGE_TYPES: Dict[str, type] = {
    "basis_announce": BasisAnnounce,
    "sift_result": SiftResult,
    "sample_request": SampleRequest,
    "sample_reveal": SampleReveal,
    "abort": Abort,
}


# ── Reports ──────────────────────────────────────────────────────────────────
class SlotDiagnostic(BaseModel):
    slot: int
    phi_a: float
    phi_b: float
    q: float
    label: str  # anti-coincidence, inconclusive, sample, key


class PeakGroup(BaseModel):
    group: str  # coincidence-bit0, coincidence-bit1, anti-coincidence
    count: int
    mean: Optional[float]
    var: Optional[float]
    weight: float


class SessionReport(BaseModel):
    scenario: Optional[str] = None
    session_id: int
    seed: int
    mode: ChannelMode
    n_pulses: int
    n_base_matched: int
    n_inconclusive: int
    n_kept: int
    n_sample: int
    n_sample_errors: int
    n_key_bits: int
    qber_estimate: float = Field(ge=0, le=1)
    mu_eff: float
    sigma_sq: float
    qber_theory: float
    sifted_key: str
    bob_sifted_key: str
    key_mismatches: int
    transcript_sha256: str
    config: dict
    slots: Optional[List[SlotDiagnostic]] = None


# ── Scenarios ────────────────────────────────────────────────────────────────
class ScenarioConfig(BaseModel):
    """Every parameter of one run, flat so it maps one-to-one onto a JSON file."""

    model_config = ConfigDict(extra="forbid")

    name: Optional[str] = None

    # Alice
    mu_signal: Optional[float] = Field(default=None, gt=0)
    received_power_dbm: Optional[float] = None
    mu_reference: Optional[float] = Field(default=None, gt=0)
    rep_rate_hz: float = Field(default=settings.DEFAULT_REP_RATE_HZ, gt=0)
    wavelength_m: float = Field(default=settings.DEFAULT_WAVELENGTH_M, gt=0)

    # Channel
    mode: ChannelMode = ChannelMode.TWO_FIBER
    length_km: float = Field(default=0.0, ge=0)
    loss_db_per_km: float = Field(default=settings.DEFAULT_LOSS_DB_PER_KM, ge=0)
    excess_loss_db: float = Field(default=0.0, ge=0)
    pol_overlap: float = Field(default=1.0, ge=0, le=1)
    linewidth_hz: float = Field(default=settings.DEFAULT_LINEWIDTH_HZ, ge=0)
    delay_s: float = Field(default=settings.DEFAULT_DELAY_S, ge=0)
    slot_period_s: Optional[float] = Field(default=None, gt=0)

    # Bob
    eta_det: float = Field(default=1.0, gt=0, le=1)
    electronic_noise: float = Field(default=settings.DEFAULT_ELECTRONIC_NOISE, ge=0)
    mu_reference_at_detector: float = Field(default=settings.DEFAULT_MU_REFERENCE, gt=0)
    threshold_q0: float = Field(default=0.0, ge=0)

    # Run
    n_pulses: int = Field(default=100_000, gt=0)
    sample_fraction: float = Field(default=0.1, gt=0, lt=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    out_dir: str = settings.OUTPUT_DIR
    bin_width: float = Field(default=settings.HISTOGRAM_BIN_WIDTH, gt=0)

    @model_validator(mode="after")
    def _check_power_source(self) -> "ScenarioConfig":
        if (self.mu_signal is None) == (self.received_power_dbm is None):
            raise ValueError("give exactly one of mu_signal or received_power_dbm")
        if self.mode == ChannelMode.SINGLE_FIBER_DELAYED and self.mu_reference is None:
            raise ValueError("single_fiber_delayed mode needs mu_reference")
        if self.mode == ChannelMode.SINGLE_FIBER_DELAYED and self.pol_overlap == 0:
            raise ValueError("single_fiber_delayed mode needs pol_overlap > 0: the reference shares the signal fiber")
        return self


# ── HTTP API ─────────────────────────────────────────────────────────────────
class HealthResponse(BaseModel):
    status: str
    version: str
    environment: str
    sweep_workers: int


class ScenarioRunResponse(BaseModel):
    scenario: Optional[str]
    seed: int
    mode: ChannelMode
    n_pulses: int
    n_base_matched: int
    n_key_bits: int
    qber_estimate: float
    qber_theory: float
    mu_eff: float
    peaks: List[PeakGroup]


class TheoreticalQberResponse(BaseModel):
    mu_eff: float
    sigma_sq: float
    threshold_q0: float
    qber: float
    conclusive_fraction: float
