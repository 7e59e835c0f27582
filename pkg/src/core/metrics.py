# src/core/metrics.py

"""
Harmonic, efficiency and voltage-ladder metrics over simulation results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.converter_sim import SimResult
from src.utils.exceptions import DomainError
from src.utils.logging import get_logger

logger = get_logger(__name__)

DEFAULT_HARMONICS = 50
STEADY_WINDOW_PERIODS = 10

# Floor for the dB-normalized magnitude of empty bins.
DB_FLOOR = -240.0


@dataclass(frozen=True)
class SpectrumReport:
    """
    Rectangular-window DFT evaluated at exact harmonic bins.

    Attributes:
        f_fund (float): Fundamental frequency in hertz.
        harmonic_mags (np.ndarray): Peak amplitudes of harmonics 1..H in volts.
        rms_total (float): RMS of the analysed window (DC included).
        window_periods (int): Fundamental periods in the window.
        dc (float): Mean value of the window.
    """

    f_fund: float
    harmonic_mags: np.ndarray
    rms_total: float
    window_periods: int
    dc: float = 0.0

    @property
    def fundamental(self) -> float:
        return float(self.harmonic_mags[0])

    @property
    def n_harmonics(self) -> int:
        return len(self.harmonic_mags)


def _periods(periods: float) -> int:
    if periods <= 0 or not float(periods).is_integer():
        raise DomainError(f"window must span a positive integer number of periods, got {periods}")
    return int(periods)


def spectrum(
    waveform: Sequence[float],
    f_fund: float,
    periods: float,
    n_harmonics: Optional[int] = DEFAULT_HARMONICS,
    sample_rate: Optional[float] = None,
) -> SpectrumReport:
    """
    Harmonic amplitudes of a uniformly sampled waveform.

    Args:
        waveform: Samples spanning exactly ``periods`` fundamental periods.
        f_fund (float): Fundamental frequency in hertz.
        periods (float): Number of periods in the window; must be an integer.
        n_harmonics (Optional[int]): Harmonics to keep; None keeps every
            harmonic below Nyquist.
        sample_rate (Optional[float]): When given, the span len/sample_rate is
            checked against ``periods``.

    Raises:
        DomainError: For a non-integer period span or an empty waveform.
    """
    x = np.asarray(waveform, dtype=float)
    k = _periods(periods)
    n = len(x)
    if n < 2:
        raise DomainError("waveform needs at least two samples")
    if sample_rate is not None:
        span = n / sample_rate * f_fund
        if abs(span - k) > 1e-6 * max(k, 1):
            raise DomainError(f"waveform spans {span:.6f} periods, expected the integer {k}")

    bins = np.fft.rfft(x)
    h_avail = (len(bins) - 1) // k
    if n_harmonics is None:
        h_max = h_avail
    else:
        if n_harmonics < 1:
            raise DomainError(f"n_harmonics must be >= 1, got {n_harmonics}")
        h_max = min(n_harmonics, h_avail)
    idx = np.arange(1, h_max + 1) * k
    mags = 2.0 * np.abs(bins[idx]) / n
    if n % 2 == 0:
        # The Nyquist bin has no mirror image.
        mags = np.where(idx == n // 2, mags / 2.0, mags)

    return SpectrumReport(
        f_fund=f_fund,
        harmonic_mags=mags,
        rms_total=float(np.sqrt(np.mean(x * x))),
        window_periods=k,
        dc=float(np.mean(x)),
    )


def thd(report: SpectrumReport, h_max: Optional[int] = None) -> float:
    """sqrt(sum V_h^2, h = 2..h_max) / V_1."""
    h_max = report.n_harmonics if h_max is None else h_max
    if h_max < 2:
        raise DomainError(f"h_max must be >= 2, got {h_max}")
    if h_max > report.n_harmonics:
        raise DomainError(f"report holds {report.n_harmonics} harmonics, asked for {h_max}")
    v1 = report.fundamental
    if v1 == 0.0:
        raise DomainError("THD is undefined for a zero fundamental")
    harmonics = report.harmonic_mags[1:h_max]
    return float(math.sqrt(float(np.sum(harmonics * harmonics))) / v1)


def thd_n(waveform: Sequence[float], report: SpectrumReport) -> float:
    """All non-fundamental RMS content over the fundamental RMS."""
    v1 = report.fundamental
    if v1 == 0.0:
        raise DomainError("THD+N is undefined for a zero fundamental")
    x = np.asarray(waveform, dtype=float)
    rms_sq = float(np.mean(x * x))
    residual = max(rms_sq - v1 * v1 / 2.0, 0.0)
    return math.sqrt(residual) / (v1 / math.sqrt(2.0))


def output_spectrum(
    result: SimResult,
    k_periods: int = STEADY_WINDOW_PERIODS,
    n_harmonics: Optional[int] = DEFAULT_HARMONICS,
) -> Tuple[SpectrumReport, np.ndarray]:
    """Spectrum of the output voltage over the last ``k_periods`` periods, with the window."""
    window = result.v_out[result.last_periods(k_periods)]
    periods = len(window) // result.samples_per_period
    return spectrum(window, result.config.f_out, periods, n_harmonics), window


def efficiency_breakdown(result: SimResult, k_periods: int = STEADY_WINDOW_PERIODS) -> Dict[str, float]:
    """
    Delivered energy, per-category losses and efficiency over the steady window.

    Raises:
        DomainError: If no energy reached the load in the window.
    """
    if not result.settled:
        logger.warning("efficiency_on_unsettled_run", periods=result.n_periods)
    window = result.ledger.window(k_periods)
    delivered = window["delivered"]
    losses = window["conduction"] + window["switching"] + window["parallelization"] + window["source"]
    if not delivered > 0.0:
        raise DomainError("efficiency is undefined without delivered energy")
    window["losses"] = losses
    window["non_switching"] = losses - window["switching"]
    window["efficiency"] = delivered / (delivered + losses)
    return window


def efficiency(result: SimResult, k_periods: int = STEADY_WINDOW_PERIODS) -> float:
    """delivered / (delivered + losses) over the last ``k_periods`` periods."""
    return efficiency_breakdown(result, k_periods)["efficiency"]


def dwell_peaks(trace: Sequence[float]) -> np.ndarray:
    """
    Peak |current| of every contiguous nonzero run of one link's current trace.

    A run is one parallel dwell; samples where the loop is cut off are zero.
    """
    x = np.abs(np.asarray(trace, dtype=float))
    active = np.concatenate(([0], (x > 0.0).astype(np.int8), [0]))
    edges = np.diff(active)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return np.array([x[s:e].max() for s, e in zip(starts, ends)])


def busiest_link_dwell_peak(currents: np.ndarray) -> float:
    """Largest, over links, of the median per-dwell peak current."""
    medians = [float(np.median(p)) for p in (dwell_peaks(currents[:, j]) for j in range(currents.shape[1])) if p.size]
    return max(medians, default=0.0)


def deviation_vs_distance(
    profile: Sequence[float],
    supply_index: int,
    v_supply: Optional[float] = None,
) -> List[Tuple[int, float]]:
    """
    Mean deviation from the supplied voltage at each hop distance.

    The reference is ``v_supply`` when given, otherwise the supplied
    module's own profile voltage.
    """
    if not 0 <= supply_index < len(profile):
        raise DomainError(f"supply_index {supply_index} outside the profile")
    v_ref = profile[supply_index] if v_supply is None else v_supply
    groups: Dict[int, List[float]] = {}
    for k, v in enumerate(profile):
        groups.setdefault(abs(k - supply_index), []).append(v_ref - v)
    return [(d, float(np.mean(groups[d]))) for d in sorted(groups)]


def relative_deviation_map(
    supply_voltages: Sequence[float],
    distances: Sequence[int],
    v_d_loop: float,
) -> np.ndarray:
    """
    Ladder-law deviation d * v_d_loop relative to the application voltage.

    Returns:
        np.ndarray: Shape (len(supply_voltages), len(distances)).
    """
    vs = np.asarray(supply_voltages, dtype=float)
    if np.any(vs <= 0):
        raise DomainError("supply voltages must be > 0")
    d = np.asarray(distances, dtype=float)
    return (d[None, :] * v_d_loop) / vs[:, None]


def calibrate_switching_energy(
    points: Sequence[Tuple[float, float, float]],
    targets: Sequence[float],
) -> float:
    """
    Least-squares switching energy per device transition.

    Args:
        points: (delivered_j, non_switching_loss_j, device_transitions) per
            operating point.
        targets: Target efficiency per operating point.

    Returns:
        float: e_sw minimising sum (N_j e - T_j)^2, where T_j is the
        switching loss that would bring point j to its target.

    Raises:
        DomainError: If the best fit is negative, i.e. the simulated losses
            without switching already push the points below their targets.
    """
    if len(points) != len(targets) or not points:
        raise DomainError("need one target efficiency per calibration point")
    num = 0.0
    den = 0.0
    ceilings = []
    for (delivered, non_switching, transitions), eta in zip(points, targets):
        if not 0.0 < eta <= 1.0:
            raise DomainError(f"target efficiency must be in (0, 1], got {eta}")
        required = delivered / eta - delivered - non_switching
        num += transitions * required
        den += transitions * transitions
        ceilings.append(delivered / (delivered + non_switching) if delivered > 0 else 0.0)
    if den == 0.0:
        raise DomainError("calibration points carry no switching transitions")
    e_sw = num / den
    if e_sw < 0.0:
        logger.error("switching_energy_infeasible", e_sw=e_sw, ceilings=ceilings, targets=list(targets))
        raise DomainError(
            "no switching energy >= 0 reaches the target efficiencies: without switching the points reach "
            + ", ".join(f"{c:.4f} (target {t:.4f})" for c, t in zip(ceilings, targets))
        )
    logger.info("switching_energy_calibrated", e_sw=e_sw, points=len(points))
    return e_sw


def calibrated_efficiency(delivered: float, non_switching: float, transitions: float, e_sw: float) -> float:
    return delivered / (delivered + non_switching + transitions * e_sw)


def spectrum_frame(report: SpectrumReport) -> pd.DataFrame:
    """CSV rows: harmonic, frequency_hz, magnitude_v, normalized_db (relative to the fundamental)."""
    h = np.arange(1, report.n_harmonics + 1)
    mags = report.harmonic_mags
    ref = report.fundamental if report.fundamental > 0 else 1.0
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mags / ref)
    db = np.maximum(np.nan_to_num(db, neginf=DB_FLOOR), DB_FLOOR)
    return pd.DataFrame(
        {
            "harmonic": h,
            "frequency_hz": h * report.f_fund,
            "magnitude_v": mags,
            "normalized_db": db,
        }
    )
