import math
from types import SimpleNamespace

import numpy as np
import pytest

from src.core.converter_sim import PeriodLedger
from src.core.metrics import (
    DB_FLOOR,
    SpectrumReport,
    busiest_link_dwell_peak,
    calibrate_switching_energy,
    calibrated_efficiency,
    deviation_vs_distance,
    dwell_peaks,
    efficiency,
    efficiency_breakdown,
    relative_deviation_map,
    spectrum,
    spectrum_frame,
    thd,
    thd_n,
)
from src.utils.exceptions import DomainError


def sine(amplitude=1.0, periods=3, n=600, harmonics=()):
    t = np.arange(n) / n * periods
    x = amplitude * np.sin(2 * np.pi * t)
    for h, a in harmonics:
        x = x + a * np.sin(2 * np.pi * h * t)
    return x


def test_pure_sine_has_no_distortion():
    report = spectrum(sine(2.0), f_fund=50.0, periods=3)
    assert report.fundamental == pytest.approx(2.0)
    assert report.n_harmonics == 50
    assert thd(report) == pytest.approx(0.0, abs=1e-9)
    assert thd_n(sine(2.0), report) == pytest.approx(0.0, abs=1e-6)


def test_known_harmonic_content():
    x = sine(1.0, harmonics=[(3, 0.3), (5, 0.4)])
    report = spectrum(x, 50.0, 3)
    assert report.harmonic_mags[2] == pytest.approx(0.3)
    assert report.harmonic_mags[4] == pytest.approx(0.4)
    assert thd(report) == pytest.approx(0.5)
    assert thd(report, h_max=3) == pytest.approx(0.3)
    assert thd_n(x, report) == pytest.approx(0.5, rel=1e-6)


def test_square_wave_wideband_thd():
    n = 1000
    x = np.where(np.arange(n) < n // 2, 1.0, -1.0)
    report = spectrum(x, 50.0, 1, n_harmonics=None)
    assert report.n_harmonics == 500
    assert thd(report) == pytest.approx(math.sqrt(math.pi**2 / 8 - 1), rel=1e-3)
    assert thd_n(x, report) == pytest.approx(thd(report), rel=1e-6)


def test_white_noise_shows_up_in_thd_n_only():
    rng = np.random.default_rng(7)
    clean = sine(1.0, periods=4, n=2000)
    values = []
    for _ in range(100):
        x = clean + rng.normal(0.0, 0.05, size=clean.size)
        values.append(thd_n(x, spectrum(x, 50.0, 4)))
    assert np.mean(values) == pytest.approx(0.05 * math.sqrt(2.0), rel=0.05)


def test_sample_rate_must_match_period_count():
    x = sine(periods=3, n=600)
    spectrum(x, 50.0, 3, sample_rate=600 / 0.06)
    with pytest.raises(DomainError):
        spectrum(x, 50.0, 3, sample_rate=600 / 0.05)


@pytest.mark.parametrize(
    "call",
    [
        lambda: spectrum(sine(), 50.0, 2.5),
        lambda: spectrum(sine(), 50.0, 0),
        lambda: spectrum([1.0], 50.0, 1),
        lambda: spectrum(sine(), 50.0, 3, n_harmonics=0),
        lambda: thd(spectrum(sine(), 50.0, 3), h_max=1),
        lambda: thd(spectrum(sine(), 50.0, 3, n_harmonics=5), h_max=6),
        lambda: thd(spectrum(np.zeros(600), 50.0, 3)),
        lambda: thd_n(np.zeros(600), spectrum(np.zeros(600), 50.0, 3)),
    ],
)
def test_spectrum_domain_errors(call):
    with pytest.raises(DomainError):
        call()


def test_deviation_vs_distance_groups_both_sides():
    profile = [30.7, 32.7, 35.0, 32.6, 30.4, 28.4]
    rows = deviation_vs_distance(profile, supply_index=2)
    assert [d for d, _ in rows] == [0, 1, 2, 3]
    assert [v for _, v in rows] == pytest.approx([0.0, 2.35, 4.45, 6.6])
    assert deviation_vs_distance(profile, 2, v_supply=36.0)[0][1] == pytest.approx(1.0)
    with pytest.raises(DomainError):
        deviation_vs_distance(profile, 6)


def test_relative_deviation_map():
    table = relative_deviation_map([10.0, 20.0], [0, 1, 2], v_d_loop=2.0)
    np.testing.assert_allclose(table, [[0.0, 0.2, 0.4], [0.0, 0.1, 0.2]])
    with pytest.raises(DomainError):
        relative_deviation_map([0.0], [1], 2.0)


def test_calibration_recovers_switching_energy():
    e_true = 3e-6
    points = [(10.0, 0.5, 1e5), (10.0, 0.3, 4e5)]
    targets = [calibrated_efficiency(d, ns, n, e_true) for d, ns, n in points]
    assert calibrate_switching_energy(points, targets) == pytest.approx(e_true)


def test_calibration_rejects_bad_input():
    with pytest.raises(DomainError):
        calibrate_switching_energy([(1.0, 0.1, 10.0)], [0.9, 0.8])
    with pytest.raises(DomainError):
        calibrate_switching_energy([(1.0, 0.1, 10.0)], [1.5])
    with pytest.raises(DomainError):
        calibrate_switching_energy([(1.0, 0.1, 0.0)], [0.9])
    # Targets above what the non-switching losses allow cannot be met by any switching energy.
    with pytest.raises(DomainError, match="without switching"):
        calibrate_switching_energy([(1.0, 0.1, 10.0)], [0.99])


def test_parseval_holds_for_harmonic_waveform():
    t = np.arange(400) / 200.0
    x = 3.0 + 2.0 * np.sin(2 * np.pi * t) + 0.5 * np.cos(2 * np.pi * 3 * t) + 0.1 * np.sin(2 * np.pi * 7 * t)
    report = spectrum(x, 1.0, 2, n_harmonics=None)
    parts = report.dc**2 + float(np.sum(report.harmonic_mags**2)) / 2.0
    assert parts == pytest.approx(report.rms_total**2, rel=1e-6)


def test_dwell_peaks_split_on_zero_samples():
    trace = [0.0, 1.0, 3.0, 2.0, 0.0, 0.0, -4.0, -1.0, 0.0, 5.0]
    np.testing.assert_allclose(dwell_peaks(trace), [3.0, 4.0, 5.0])
    assert dwell_peaks(np.zeros(5)).size == 0
    currents = np.column_stack((trace, np.zeros(10)))
    assert busiest_link_dwell_peak(currents) == pytest.approx(4.0)


def ledger(delivered_per_period):
    periods = np.arange(3, dtype=float)
    return PeriodLedger(
        energy_in=10.0 * periods,
        delivered=delivered_per_period * periods,
        conduction=0.5 * periods,
        switching=0.2 * periods,
        parallelization=0.2 * periods,
        source=0.1 * periods,
        stored=np.ones(3),
        transitions=10.0 * periods,
    )


def test_efficiency_over_ledger_window():
    result = SimpleNamespace(ledger=ledger(9.0), settled=True, n_periods=2)
    breakdown = efficiency_breakdown(result, 1)
    assert breakdown["losses"] == pytest.approx(1.0)
    assert breakdown["non_switching"] == pytest.approx(0.8)
    assert breakdown["transitions"] == 10.0
    assert efficiency(result, 5) == pytest.approx(0.9)


def test_efficiency_needs_delivered_energy():
    result = SimpleNamespace(ledger=ledger(0.0), settled=False, n_periods=2)
    with pytest.raises(DomainError):
        efficiency(result)


def test_spectrum_frame_normalizes_to_fundamental():
    report = SpectrumReport(f_fund=50.0, harmonic_mags=np.array([2.0, 0.2, 0.0]), rms_total=1.0, window_periods=1)
    frame = spectrum_frame(report)
    assert list(frame.columns) == ["harmonic", "frequency_hz", "magnitude_v", "normalized_db"]
    assert frame["frequency_hz"].tolist() == [50.0, 100.0, 150.0]
    assert frame["normalized_db"].tolist() == pytest.approx([0.0, -20.0, DB_FLOOR])
