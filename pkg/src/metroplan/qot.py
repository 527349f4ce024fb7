"""Link and lightpath GSNR: ASE, closed-form ISRS-GN nonlinear interference,
launch power optimisation and modulation selection."""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._npz import save_npz
from .spectrum import BandLayout, Modulation, OpticalParameters

THZ = 1e12


class QoTError(ValueError):
    pass


# ----------------------------------------------------------------------- spans


@dataclass(frozen=True)
class SpanPlan:
    """Equal-length spans per link, each followed by a loss-compensating EDFA."""

    span_count: np.ndarray
    span_length_km: np.ndarray

    def __post_init__(self):
        if np.any(self.span_count < 1):
            raise QoTError("span count must be >= 1")
        if np.any(self.span_length_km <= 0):
            raise QoTError("span length must be > 0")

    def gain(self, alpha_db: float) -> np.ndarray:
        return 10 ** (alpha_db * self.span_length_km / 10)


def make_span_plan(link_lengths_km: Sequence[float], max_span_km: float = 80.0) -> SpanPlan:
    lengths = np.asarray(link_lengths_km, dtype=float)
    if np.any(lengths <= 0):
        raise QoTError("non-positive link length")
    count = np.maximum(1, np.ceil(lengths / max_span_km - 1e-12)).astype(int)
    return SpanPlan(count, lengths / count)


# ------------------------------------------------------------------ noise terms


def ase_power(freq_hz: np.ndarray, gain: float, noise_figure: np.ndarray, params: OpticalParameters) -> np.ndarray:
    """ASE power of one amplifier over the channel bandwidth, in W."""
    return noise_figure * params.h_plank * freq_hz * (gain - 1) * params.channel_bandwidth


def nli_efficiency(
    freq_hz: np.ndarray, power_w: float, span_km: float, params: OpticalParameters, isrs: bool = True
) -> np.ndarray:
    """Single-span NLI efficiency per channel (1/W^2) for a fully loaded,
    uniformly powered grid: SPM plus XPM of the closed-form ISRS-GN model.

    With ``isrs=False`` the Raman slope is dropped, which reduces to the GN model.
    """
    f = np.asarray(freq_hz, dtype=float)
    f = f - f.mean()
    n = f.size
    b = params.channel_bandwidth
    a = params.alpha_norm
    a_bar = a
    gamma = params.gamma
    b2, b3 = params.beta_2, params.beta_3
    cr = params.Cr if isrs else 0.0
    p_tot = power_w * n
    del span_km  # the asymptotic form does not depend on span length

    t = (a + a_bar - p_tot * cr * f) ** 2
    ap = a + a_bar
    denom = a_bar * (2 * a + a_bar)

    phi_i = 1.5 * math.pi**2 * (b2 + 2 * math.pi * b3 * f)
    spm = (
        4 / 9 * gamma**2 / b**2 * math.pi / (phi_i * denom)
        * ((t - a**2) / a * np.arcsinh(phi_i * b**2 / (math.pi * a))
           + (ap**2 - t) / ap * np.arcsinh(phi_i * b**2 / (math.pi * ap)))
    )

    fi = f[:, None]
    fk = f[None, :]
    phi_ik = 2 * math.pi**2 * (fk - fi) * (b2 + math.pi * b3 * (fi + fk))
    tk = t[None, :]
    off = ~np.eye(n, dtype=bool)
    safe = np.where(off, phi_ik, 1.0)
    xpm_terms = (
        32 / 27 * gamma**2 / (b * safe * denom)
        * ((tk - a**2) / a * np.arctan(safe * b / a) + (ap**2 - tk) / ap * np.arctan(safe * b / ap))
    )
    xpm = np.where(off, xpm_terms, 0.0).sum(axis=1)
    return spm + xpm


def slot_noise_figures(layout: BandLayout, params: OpticalParameters) -> np.ndarray:
    nf = np.full(layout.total_slots, params.noise_figure_C)
    nf[layout.separation_indices[1]:] = params.noise_figure_L
    return nf


# ------------------------------------------------------------------- modulation


def select_modulation(gsnr_db: float, params: OpticalParameters) -> Modulation | None:
    """Highest-order format whose SNR threshold does not exceed ``gsnr_db``."""
    best = None
    for m in params.modulations:
        if m.snr_db <= gsnr_db:
            best = m
    return best


def supported_bitrate(gsnr_db: np.ndarray, params: OpticalParameters) -> np.ndarray:
    """Vectorised :func:`select_modulation`; 0 where no format is feasible."""
    thresholds = np.array([m.snr_db for m in params.modulations])
    rates = np.concatenate([[0.0], [m.bitrate for m in params.modulations]])
    idx = np.searchsorted(thresholds, np.asarray(gsnr_db, dtype=float), side="right")
    return rates[idx]


# ---------------------------------------------------------------- link profile


@dataclass
class LinkQoTProfile:
    gsnr_db: np.ndarray  # [link, slot] at the optimal power
    optimal_power_dbm: np.ndarray  # [link]
    throughput_at_optimum: np.ndarray  # [link] Gbps
    candidate_powers_dbm: np.ndarray
    ase_power: np.ndarray = field(repr=False)  # [link, power, slot] W
    nli_power: np.ndarray = field(repr=False)  # [link, power, slot] W


def link_gsnr_profile(
    grid_thz: np.ndarray,
    candidate_powers_dbm: Sequence[float],
    spans: SpanPlan,
    params: OpticalParameters,
    layout: BandLayout,
    nli: bool = True,
    isrs: bool = True,
) -> LinkQoTProfile:
    """Per-link, per-slot GSNR at the launch power that maximises the link's
    total supported bitrate (ties go to the lower power)."""
    powers = np.sort(np.asarray(candidate_powers_dbm, dtype=float))
    if powers.size == 0:
        raise QoTError("empty candidate power set")
    grid = np.asarray(grid_thz, dtype=float)
    if grid.size == 0 or grid.size != layout.total_slots:
        raise QoTError("grid size must match the band layout")
    freq = grid * THZ
    nf = slot_noise_figures(layout, params)
    power_w = 1e-3 * 10 ** (powers / 10)

    n_links = spans.span_count.size
    ase = np.empty((n_links, powers.size, grid.size))
    nli_p = np.zeros_like(ase)
    gains = spans.gain(params.alpha_db)
    eta_cache: dict[tuple[float, int], np.ndarray] = {}
    for l in range(n_links):
        n_sp = spans.span_count[l]
        ase[l, :, :] = n_sp * ase_power(freq, gains[l], nf, params)[None, :]
        if not nli:
            continue
        for j, p in enumerate(power_w):
            key = (float(spans.span_length_km[l]), j)
            if key not in eta_cache:
                eta_cache[key] = nli_efficiency(freq, p, spans.span_length_km[l], params, isrs)
            nli_p[l, j, :] = n_sp * p**3 * eta_cache[key]

    gsnr_all = 10 * np.log10(power_w[None, :, None] / (ase + nli_p))
    throughput = supported_bitrate(gsnr_all, params).sum(axis=2)  # [link, power]
    best = np.argmax(throughput, axis=1)  # first maximum, i.e. lowest power
    rows = np.arange(n_links)
    return LinkQoTProfile(
        gsnr_db=gsnr_all[rows, best, :],
        optimal_power_dbm=powers[best],
        throughput_at_optimum=throughput[rows, best],
        candidate_powers_dbm=powers,
        ase_power=ase,
        nli_power=nli_p,
    )


def profile_cache_key(*parts) -> str:
    """Content hash over JSON-serialisable pieces and numpy arrays."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            h.update(np.ascontiguousarray(part, dtype=float).tobytes())
        else:
            h.update(json.dumps(part, sort_keys=True, default=str).encode())
    return h.hexdigest()[:16]


def cached_link_gsnr_profile(cache_dir: Path | None, key_parts: Sequence, **kwargs) -> LinkQoTProfile:
    """:func:`link_gsnr_profile` with an on-disk cache keyed by a content hash."""
    if cache_dir is None:
        return link_gsnr_profile(**kwargs)
    params = kwargs["params"]
    key = profile_cache_key(
        list(key_parts), asdict(params), kwargs["grid_thz"], np.asarray(kwargs["candidate_powers_dbm"]),
        kwargs["spans"].span_count, kwargs["spans"].span_length_km, kwargs.get("nli", True), kwargs.get("isrs", True),
    )
    path = Path(cache_dir) / f"qot_cache_{key}.npz"
    if path.exists():
        with np.load(path) as z:
            return LinkQoTProfile(**{k: z[k] for k in z.files})
    prof = link_gsnr_profile(**kwargs)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.stem + ".tmp.npz")
    save_npz(tmp, asdict(prof))
    tmp.replace(path)
    return prof


# ---------------------------------------------------------------- path level


@dataclass(frozen=True)
class FilterPenaltyTable:
    """Rows of ``(max_hops, max_degree, penalty_db)``; the first row matching a
    path's hop count and largest node degree applies."""

    rows: tuple[tuple[float, float, float], ...] = (
        (1, math.inf, 0.3),
        (3, math.inf, 1.0),
        (6, math.inf, 2.0),
        (10, math.inf, 3.5),
        (15, math.inf, 5.0),
    )
    fallback_db: float = 7.0

    def __post_init__(self):
        for _, _, p in self.rows:
            if not 0.3 <= p <= 7.0:
                raise QoTError("filter penalty outside [0.3, 7.0] dB")

    def lookup(self, hops: int, max_degree: int) -> float:
        for max_hops, max_deg, penalty in self.rows:
            if hops <= max_hops and max_degree <= max_deg:
                return float(penalty)
        return float(self.fallback_db)


@dataclass(frozen=True)
class QoTPenalties:
    trx_snr_db: float | None = 36.0  # None disables the transceiver term
    filter_penalty_db: float = 0.0
    aging_margin_db: float = 1.0

    def __post_init__(self):
        if self.filter_penalty_db < 0 or self.aging_margin_db < 0:
            raise QoTError("penalties must be >= 0")
        if self.trx_snr_db is not None and self.trx_snr_db < 0:
            raise QoTError("transceiver SNR must be >= 0")


def path_gsnr(link_gsnrs_db: Sequence[float] | np.ndarray, penalties: QoTPenalties) -> float | np.ndarray:
    """Incoherent sum of link noise plus transceiver noise, minus penalties.

    ``link_gsnrs_db`` may be a 1-D list of links or a [link, slot] array, in
    which case one value per slot is returned.
    """
    g = np.asarray(link_gsnrs_db, dtype=float)
    if g.size == 0 or g.shape[0] == 0:
        raise QoTError("path has no links")
    if not np.all(np.isfinite(g)):
        raise QoTError("non-finite link GSNR")
    inv = np.sum(10 ** (-g / 10), axis=0)
    if penalties.trx_snr_db is not None:
        inv = inv + 10 ** (-penalties.trx_snr_db / 10)
    out = -10 * np.log10(inv) - penalties.filter_penalty_db - penalties.aging_margin_db
    return float(out) if np.ndim(out) == 0 else out
