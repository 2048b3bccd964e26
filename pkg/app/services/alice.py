"""
HomodyneQKD — Alice
BB84 symbol source, the dual-electrode QPSK encoding table and faint-pulse
frame construction for both channel architectures.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from numpy.typing import NDArray

from app.core.errors import ConfigError
from app.schemas.schemas import (
    TWO_PI,
    AliceConfig,
    ChannelMode,
    EncodingRow,
    EncodingTable,
)
from app.services.optics import ComplexAmplitude, mzm_dual_drive

logger = logging.getLogger(__name__)

# Electrode offset of the built-in table; any constant keeps the envelope flat.
ELECTRODE_OFFSET_RAD = math.pi / 4.0


@dataclass(frozen=True)
class Symbol:
    basis: int
    bit: int

    def __post_init__(self):
        if self.basis not in (0, 1) or self.bit not in (0, 1):
            raise ConfigError(f"symbol fields must be binary, got {self}")


@dataclass(frozen=True)
class SymbolStream:
    """A sequence of symbols held column-wise."""

    bases: NDArray[np.uint8]
    bits: NDArray[np.uint8]

    def __len__(self) -> int:
        return int(self.bases.size)

    def __getitem__(self, i: int) -> Symbol:
        return Symbol(int(self.bases[i]), int(self.bits[i]))

    def __iter__(self) -> Iterator[Symbol]:
        for basis, bit in zip(self.bases.tolist(), self.bits.tolist()):
            yield Symbol(basis, bit)

    @classmethod
    def from_symbols(cls, symbols) -> "SymbolStream":
        symbols = list(symbols)
        return cls(
            bases=np.array([s.basis for s in symbols], dtype=np.uint8),
            bits=np.array([s.bit for s in symbols], dtype=np.uint8),
        )


@dataclass(frozen=True)
class PulseFrame:
    mode: ChannelMode
    signal: NDArray[np.complex128]
    reference: Optional[NDArray[np.complex128]]
    symbols: SymbolStream  # stays on Alice's side of the harness
    phi_a: NDArray[np.float64]

    def __len__(self) -> int:
        return int(self.signal.size)

    @property
    def slot_index(self) -> NDArray[np.int64]:
        return np.arange(len(self), dtype=np.int64)


def default_table() -> EncodingTable:
    """Φ_A = bit·π + basis·π/2 driven as φ1 = Φ_A + δ, φ2 = Φ_A − δ."""
    rows = []
    for basis in (0, 1):
        for bit in (0, 1):
            phase = bit * math.pi + basis * math.pi / 2.0
            rows.append(EncodingRow(
                basis=basis,
                bit=bit,
                phi1=phase + ELECTRODE_OFFSET_RAD,
                phi2=phase - ELECTRODE_OFFSET_RAD,
            ))
    return EncodingTable(rows=rows)


def _table_arrays(table: EncodingTable):
    phi1 = np.empty((2, 2), dtype=np.float64)
    phi2 = np.empty((2, 2), dtype=np.float64)
    for row in table.rows:
        phi1[row.basis, row.bit] = row.phi1
        phi2[row.basis, row.bit] = row.phi2
    return phi1, phi2


def encode_symbol(s: Symbol, table: EncodingTable, e_in: ComplexAmplitude) -> ComplexAmplitude:
    phi1, phi2 = table.lookup(s.basis, s.bit)
    return mzm_dual_drive(e_in, phi1, phi2)


def random_symbols(rng: np.random.Generator, n: int) -> SymbolStream:
    """n independent uniformly random (basis, bit) pairs."""
    if n < 0:
        raise ConfigError(f"symbol count must be non-negative, got {n}")
    bases = rng.integers(0, 2, size=n, dtype=np.uint8)
    bits = rng.integers(0, 2, size=n, dtype=np.uint8)
    return SymbolStream(bases=bases, bits=bits)


def build_frame(symbols: SymbolStream, cfg: AliceConfig, mode: ChannelMode) -> PulseFrame:
    """
    Encode every symbol onto a pulse of exactly mu_signal photons. The
    modulator envelope is divided out beforehand so mu_signal is what leaves
    Alice whatever the electrode offset.
    """
    if len(symbols) == 0:
        raise ConfigError("cannot build a frame from zero symbols")

    table = cfg.table or default_table()
    carrier = math.sqrt(cfg.mu_signal) / table.envelope

    phi1_tab, phi2_tab = _table_arrays(table)
    phi1 = phi1_tab[symbols.bases, symbols.bits]
    phi2 = phi2_tab[symbols.bases, symbols.bits]
    signal = np.asarray(mzm_dual_drive(complex(carrier), phi1, phi2), dtype=np.complex128)

    reference = None
    if mode == ChannelMode.SINGLE_FIBER_DELAYED:
        if cfg.mu_reference is None:
            raise ConfigError("single_fiber_delayed mode needs mu_reference")
        reference = np.full(len(symbols), math.sqrt(cfg.mu_reference), dtype=np.complex128)

    logger.debug(f"Built {mode.value} frame: {len(symbols)} slots, mu_signal={cfg.mu_signal}")
    return PulseFrame(
        mode=mode,
        signal=signal,
        reference=reference,
        symbols=symbols,
        phi_a=np.angle(signal) % TWO_PI,
    )
