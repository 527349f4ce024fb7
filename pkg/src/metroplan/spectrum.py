"""Optical bands, fixed frequency grids and the physical parameter set."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

BAND_NAMES = ("C", "SuperC", "L")


class SpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class Modulation:
    name: str
    snr_db: float
    bitrate: float


DEFAULT_MODULATIONS = (
    Modulation("PM-BPSK", 4.32, 64.0),
    Modulation("PM-QPSK", 7.33, 120.0),
    Modulation("PM-8QAM", 11.40, 200.0),
    Modulation("PM-16QAM", 13.90, 260.0),
    Modulation("PM-32QAM", 16.85, 320.0),
    Modulation("PM-64QAM", 19.73, 400.0),
)


@dataclass(frozen=True)
class OpticalParameters:
    """Fiber, amplifier and transceiver constants in SI units.

    Noise figures are linear. ``Cr`` is the Raman gain slope in 1/(W m Hz).
    """

    h_plank: float = 6.626e-34
    target_ber: float = 0.01
    beta_2: float = -2.17e-26
    beta_3: float = 1.4e-40
    gamma: float = 0.00121
    Cr: float = 2.8e-17
    alpha_db: float = 0.2
    noise_figure_C: float = 10 ** (5.0 / 10)
    noise_figure_L: float = 10 ** (6.0 / 10)
    symbol_rate: float = 64e9
    rolloff: float = 0.1
    modulations: tuple[Modulation, ...] = DEFAULT_MODULATIONS
    # accepted for completeness, unused by the closed-form NLI expression
    phi_mfl: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        if self.alpha_db <= 0:
            raise SpectrumError("alpha_db must be > 0")
        if self.symbol_rate <= 0:
            raise SpectrumError("symbol_rate must be > 0")
        if not 0 <= self.rolloff < 1:
            raise SpectrumError("rolloff must be in [0, 1)")
        snrs = [m.snr_db for m in self.modulations]
        rates = [m.bitrate for m in self.modulations]
        if not self.modulations or any(b <= a for a, b in zip(snrs, snrs[1:])) or any(
            b <= a for a, b in zip(rates, rates[1:])
        ):
            raise SpectrumError("modulation thresholds must be strictly increasing in SNR and bitrate")

    @property
    def alpha_norm(self) -> float:
        """Power attenuation coefficient in 1/m."""
        return self.alpha_db / (10 * math.log10(math.e)) / 1e3

    def effective_length(self, span_km: float) -> float:
        a = self.alpha_norm
        return (1 - math.exp(-a * span_km * 1e3)) / a

    @property
    def channel_bandwidth(self) -> float:
        return self.symbol_rate * (1 + self.rolloff)

    @property
    def bitrates(self) -> tuple[float, ...]:
        return tuple(m.bitrate for m in self.modulations)


@dataclass(frozen=True)
class Band:
    name: str
    start_freq: float  # THz
    end_freq: float  # THz
    channel_spacing: float  # THz

    def __post_init__(self):
        if self.channel_spacing <= 0:
            raise SpectrumError("channel spacing must be > 0")
        if self.end_freq <= self.start_freq:
            raise SpectrumError("end_freq must exceed start_freq")

    @property
    def num_channels(self) -> int:
        # small epsilon so that exact multiples are not lost to float division
        return int(math.floor((self.end_freq - self.start_freq) / self.channel_spacing + 1e-9))

    @property
    def grid(self) -> np.ndarray:
        return build_grid(self)


def build_grid(band: Band) -> np.ndarray:
    """Channel center frequencies in THz, half a spacing in from the band edge."""
    if band.channel_spacing <= 0:
        raise SpectrumError("channel spacing must be > 0")
    i = np.arange(band.num_channels, dtype=float)
    return band.start_freq + (i + 0.5) * band.channel_spacing


@dataclass(frozen=True)
class BandLayout:
    """Slot index boundaries: C is ``[0, sep[0])``, SuperC ``[sep[0], sep[1])``, L the rest."""

    separation_indices: tuple[int, int]
    total_slots: int

    def __post_init__(self):
        s0, s1 = self.separation_indices
        if not 0 < s0 < s1 <= self.total_slots:
            raise SpectrumError(f"invalid band layout {self.separation_indices} for {self.total_slots} slots")

    def band_slices(self) -> dict[str, range]:
        s0, s1 = self.separation_indices
        return {"C": range(0, s0), "SuperC": range(s0, s1), "L": range(s1, self.total_slots)}


def band_of_slot(layout: BandLayout, slot: int) -> str:
    if not 0 <= slot < layout.total_slots:
        raise SpectrumError(f"slot {slot} outside [0, {layout.total_slots})")
    s0, s1 = layout.separation_indices
    if slot < s0:
        return "C"
    if slot < s1:
        return "SuperC"
    return "L"


def band_index(name: str) -> int:
    """1 for C, 2 for SuperC, 3 for L."""
    return BAND_NAMES.index(name) + 1


DEFAULT_BANDS = (
    Band("C", 191.25, 196.05, 0.075),
    Band("SuperC", 196.05, 197.25, 0.075),
    Band("L", 185.25, 191.25, 0.075),
)


@dataclass(frozen=True)
class SpectrumPlan:
    """Bands concatenated in slot order with the matching layout."""

    bands: tuple[Band, ...] = DEFAULT_BANDS
    layout: BandLayout = field(init=False)

    def __post_init__(self):
        if [b.name for b in self.bands] != list(BAND_NAMES):
            raise SpectrumError(f"bands must be given in order {BAND_NAMES}")
        counts = [b.num_channels for b in self.bands]
        object.__setattr__(
            self, "layout", BandLayout((counts[0], counts[0] + counts[1]), sum(counts))
        )

    @property
    def grid_thz(self) -> np.ndarray:
        return np.concatenate([build_grid(b) for b in self.bands])

    @property
    def num_slots(self) -> int:
        return self.layout.total_slots
