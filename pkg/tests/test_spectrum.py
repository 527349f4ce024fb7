from __future__ import annotations

import numpy as np
import pytest

from metroplan.spectrum import (
    DEFAULT_BANDS,
    Band,
    BandLayout,
    OpticalParameters,
    SpectrumError,
    SpectrumPlan,
    band_index,
    band_of_slot,
    build_grid,
)


def test_c_band_has_64_slots():
    grid = build_grid(Band("C", 191.25, 196.05, 0.075))
    assert grid.size == 64
    assert grid[0] == pytest.approx(191.2875)
    assert np.allclose(np.diff(grid), 0.075)


def test_full_plan_has_160_slots():
    plan = SpectrumPlan()
    assert plan.num_slots == 160
    assert plan.layout == BandLayout((64, 80), 160)
    assert sum(b.end_freq - b.start_freq for b in DEFAULT_BANDS) == pytest.approx(12.0)


def test_span_narrower_than_spacing_gives_no_slots():
    assert build_grid(Band("C", 193.0, 193.05, 0.075)).size == 0


def test_band_validation():
    with pytest.raises(SpectrumError):
        Band("C", 193.0, 192.0, 0.075)
    with pytest.raises(SpectrumError):
        Band("C", 192.0, 193.0, 0.0)
    with pytest.raises(SpectrumError):
        BandLayout((80, 64), 160)
    with pytest.raises(SpectrumError):
        SpectrumPlan((DEFAULT_BANDS[1], DEFAULT_BANDS[0], DEFAULT_BANDS[2]))


def test_band_of_slot():
    layout = BandLayout((64, 80), 160)
    assert band_of_slot(layout, 0) == "C"
    assert band_of_slot(layout, 63) == "C"
    assert band_of_slot(layout, 64) == "SuperC"
    assert band_of_slot(layout, 79) == "SuperC"
    assert band_of_slot(layout, 80) == "L"
    assert band_of_slot(layout, 159) == "L"
    with pytest.raises(SpectrumError):
        band_of_slot(layout, 160)
    with pytest.raises(SpectrumError):
        band_of_slot(layout, -1)


def test_band_index():
    assert [band_index(b) for b in ("C", "SuperC", "L")] == [1, 2, 3]


def test_optical_parameters():
    p = OpticalParameters()
    assert p.channel_bandwidth == pytest.approx(70.4e9)
    assert p.alpha_norm * 1e3 == pytest.approx(0.2 / 4.342944819, rel=1e-9)
    assert p.effective_length(80) == pytest.approx((1 - np.exp(-p.alpha_norm * 80e3)) / p.alpha_norm)
    assert p.bitrates == (64.0, 120.0, 200.0, 260.0, 320.0, 400.0)
    with pytest.raises(SpectrumError):
        OpticalParameters(alpha_db=0)
    with pytest.raises(SpectrumError):
        OpticalParameters(modulations=tuple(reversed(p.modulations)))
