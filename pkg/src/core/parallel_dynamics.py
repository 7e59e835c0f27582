# src/core/parallel_dynamics.py

"""
Closed-form analysis of the two-capacitor parallelization loop.

The loop consists of two equal capacitors C with initial voltages V1 > V2,
a series resistance R, an inductance L and a lumped diode drop V_d:

    R i + L di/dt + v2 - v1 + V_d = 0,   i = C dv2/dt = -C dv1/dt

with v1(0) = V1, v2(0) = V2, i(0) = 0. The diode ends the exchange at the
first current zero, so the loop delivers a single current pulse:

- resistance dominated (R^2 >= 8L/C): unipolar decaying current, the
  capacitors settle one diode drop apart;
- inductance dominated (R^2 < 8L/C): a damped half-sine ending at pi/beta,
  whose residual deviation can be tuned (and even reversed) with L.

Unequal capacitances are outside the closed form; use the ODE oracle.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Tuple

from scipy import optimize

from src.utils.exceptions import DomainError, NoRootError
from src.utils.logging import get_logger

logger = get_logger(__name__)

# Relative band around R^2 = 8L/C inside which the repeated-root form is used.
CRITICAL_BAND = 1e-9

# Resistive end time: the current has decayed below this fraction of its peak.
END_FRACTION = 1e-6


@dataclass(frozen=True)
class LoopParams:
    """
    Parallelization loop parameters.

    Attributes:
        c (float): Per-module capacitance in farads.
        r (float): Loop resistance in ohms.
        l (float): Loop inductance in henries.
        v_d (float): Lumped loop diode drop in volts.
    """

    c: float
    r: float
    l: float
    v_d: float

    def __post_init__(self) -> None:
        if not (self.c > 0 and self.r > 0 and self.l > 0):
            raise DomainError(f"loop needs c, r, l > 0, got c={self.c}, r={self.r}, l={self.l}")
        if self.v_d < 0:
            raise DomainError(f"loop diode drop must be >= 0, got {self.v_d}")

    @property
    def critical_inductance(self) -> float:
        """L* = R^2 C / 8, the regime boundary."""
        return self.r * self.r * self.c / 8.0

    def engaged(self, v1_0: float, v2_0: float) -> bool:
        """The diode conducts only when V1 exceeds V2 by more than V_d."""
        return v1_0 > v2_0 + self.v_d


class RegimeKind(str, enum.Enum):
    RESISTANCE_DOMINATED = "ResistanceDominated"
    INDUCTANCE_DOMINATED = "InductanceDominated"


@dataclass(frozen=True)
class Regime:
    """
    Loop regime with its characteristic roots.

    For the resistive regime r1 >= r2 are the real roots (1/s) and
    ``critical`` marks the repeated-root case. For the inductive regime
    alpha < 0 is the decay rate and beta > 0 the angular frequency.
    """

    kind: RegimeKind
    r1: float = math.nan
    r2: float = math.nan
    alpha: float = math.nan
    beta: float = math.nan
    critical: bool = False

    @property
    def resistive(self) -> bool:
        return self.kind is RegimeKind.RESISTANCE_DOMINATED

    @property
    def overshoot_factor(self) -> float:
        """k = exp(alpha*pi/beta); zero in the resistive regime."""
        if self.resistive:
            return 0.0
        return math.exp(self.alpha * math.pi / self.beta)


@dataclass(frozen=True)
class EquilibrationOutcome:
    """
    Result of one parallelization.

    Attributes:
        v1_end, v2_end (float): Final capacitor voltages in volts.
        delta_v_inf (float): v1_end - v2_end.
        energy_loss (float): Dissipated energy in joules.
        t_end (float): End of conduction in seconds (0 when not engaged).
        i_peak (float): Peak loop current in amperes.
        engaged (bool): Whether the diode conducted at all.
        regime (Regime): Regime of the loop.
    """

    v1_end: float
    v2_end: float
    delta_v_inf: float
    energy_loss: float
    t_end: float
    i_peak: float
    engaged: bool
    regime: Regime


def classify_regime(p: LoopParams) -> Regime:
    """
    Classifies the loop and returns its characteristic roots.

    R^2 >= 8L/C is resistance dominated (ties included); inside a relative
    band of 1e-9 around the boundary the repeated root -R/2L is used.
    """
    boundary = 8.0 * p.l / p.c
    disc = p.r * p.r - boundary
    sigma = -p.r / (2.0 * p.l)
    if abs(disc) < CRITICAL_BAND * boundary:
        return Regime(RegimeKind.RESISTANCE_DOMINATED, r1=sigma, r2=sigma, critical=True)
    if disc >= 0.0:
        root = math.sqrt(disc) / (2.0 * p.l)
        return Regime(RegimeKind.RESISTANCE_DOMINATED, r1=sigma + root, r2=sigma - root)
    beta = math.sqrt(-disc) / (2.0 * p.l)
    return Regime(RegimeKind.INDUCTANCE_DOMINATED, alpha=sigma, beta=beta)


def _drive(p: LoopParams, v1_0: float, v2_0: float) -> float:
    return v1_0 - v2_0 - p.v_d


def _shape(regime: Regime, t: float) -> float:
    """Current per volt of drive times L: i(t) * L / (V1 - V2 - V_d)."""
    if regime.resistive:
        if regime.critical:
            return t * math.exp(regime.r1 * t)
        return (math.exp(regime.r1 * t) - math.exp(regime.r2 * t)) / (regime.r1 - regime.r2)
    return math.exp(regime.alpha * t) * math.sin(regime.beta * t) / regime.beta


def peak_current(p: LoopParams, v1_0: float, v2_0: float) -> Tuple[float, float]:
    """
    Time and value of the loop current peak.

    Returns:
        Tuple[float, float]: (t_peak, i_peak); (0, 0) when the loop is not engaged.
    """
    if not p.engaged(v1_0, v2_0):
        return 0.0, 0.0
    regime = classify_regime(p)
    if regime.resistive:
        if regime.critical:
            t_peak = -1.0 / regime.r1
        else:
            t_peak = math.log(regime.r1 / regime.r2) / (regime.r2 - regime.r1)
    else:
        t_peak = math.atan(regime.beta / -regime.alpha) / regime.beta
    return t_peak, _drive(p, v1_0, v2_0) / p.l * _shape(regime, t_peak)


def end_time(p: LoopParams, v1_0: float, v2_0: float) -> float:
    """
    End of conduction.

    Inductive loops stop at the first current zero, pi/beta. Resistive loops
    decay asymptotically; the reported end is where the current has fallen
    below 1e-6 of its peak.
    """
    if not p.engaged(v1_0, v2_0):
        return 0.0
    regime = classify_regime(p)
    if not regime.resistive:
        return math.pi / regime.beta
    t_peak, i_peak = peak_current(p, v1_0, v2_0)
    target = END_FRACTION * i_peak
    t_hi = 2.0 * t_peak
    while loop_current(p, v1_0, v2_0, t_hi) > target:
        t_hi *= 2.0
    return optimize.brentq(
        lambda t: loop_current(p, v1_0, v2_0, t) - target,
        t_peak,
        t_hi,
        xtol=1e-15,
        rtol=1e-12,
    )


def loop_current(p: LoopParams, v1_0: float, v2_0: float, t: float) -> float:
    """
    Loop current at time t after the parallel mode is entered.

    Returns 0 when the loop is not engaged (the mode degrades to bypass) and,
    for inductive loops, at and after the first current zero pi/beta.
    """
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if not p.engaged(v1_0, v2_0):
        return 0.0
    regime = classify_regime(p)
    if not regime.resistive and t >= math.pi / regime.beta:
        return 0.0
    return _drive(p, v1_0, v2_0) / p.l * _shape(regime, t)


def transferred_voltage(p: LoopParams, v1_0: float, v2_0: float) -> float:
    """Voltage step x moved from capacitor 1 to capacitor 2 by one pulse."""
    if not p.engaged(v1_0, v2_0):
        return 0.0
    k = classify_regime(p).overshoot_factor
    return _drive(p, v1_0, v2_0) * (1.0 + k) / 2.0


def equilibrate(p: LoopParams, v1_0: float, v2_0: float) -> EquilibrationOutcome:
    """
    Post-parallelization state of the loop.

    Resistive: v1 = (V1+V2+V_d)/2, v2 = (V1+V2-V_d)/2.
    Inductive: v1 = V1 - (V1-V2-V_d)(1+k)/2, v2 = V2 + (V1-V2-V_d)(1+k)/2,
    with k = exp(alpha*pi/beta). Charge is conserved in both cases.
    """
    if v1_0 < 0 or v2_0 < 0:
        raise DomainError(f"initial voltages must be >= 0, got {v1_0}, {v2_0}")
    regime = classify_regime(p)
    if not p.engaged(v1_0, v2_0):
        return EquilibrationOutcome(
            v1_end=v1_0,
            v2_end=v2_0,
            delta_v_inf=v1_0 - v2_0,
            energy_loss=0.0,
            t_end=0.0,
            i_peak=0.0,
            engaged=False,
            regime=regime,
        )

    x = transferred_voltage(p, v1_0, v2_0)
    v1_end = v1_0 - x
    v2_end = v2_0 + x
    _, i_peak = peak_current(p, v1_0, v2_0)
    outcome = EquilibrationOutcome(
        v1_end=v1_end,
        v2_end=v2_end,
        delta_v_inf=v1_end - v2_end,
        energy_loss=energy_loss_disep(p, v1_0, v2_0),
        t_end=end_time(p, v1_0, v2_0),
        i_peak=i_peak,
        engaged=True,
        regime=regime,
    )
    logger.debug(
        "equilibrate",
        regime=regime.kind.value,
        delta_v0=v1_0 - v2_0,
        delta_v_inf=outcome.delta_v_inf,
        energy_loss=outcome.energy_loss,
    )
    return outcome


def energy_loss_ch2b(c: float, v1: float, v2: float) -> float:
    """Bidirectional (CH2B) paralleling loss, C (V1 - V2)^2 / 4, independent of R and L."""
    if not c > 0:
        raise DomainError(f"c must be > 0, got {c}")
    dv = v1 - v2
    return 0.25 * c * dv * dv


def energy_loss_disep(p: LoopParams, v1_0: float, v2_0: float) -> float:
    """
    DiSeP paralleling loss.

    Resistive: C ((V1-V2)^2 - V_d^2) / 4.
    Inductive: C D'^2 (1-k^2) / 4 + C D' (1+k) V_d / 2 with D' = V1-V2-V_d,
    the expanded form of the tabulated expression (no division by 1-k).
    Returns 0 for a non-engaged loop.
    """
    if not p.engaged(v1_0, v2_0):
        return 0.0
    regime = classify_regime(p)
    if regime.resistive:
        dv = v1_0 - v2_0
        return 0.25 * p.c * (dv * dv - p.v_d * p.v_d)
    k = regime.overshoot_factor
    drive = _drive(p, v1_0, v2_0)
    return 0.25 * p.c * drive * drive * (1.0 - k * k) + 0.5 * p.c * drive * (1.0 + k) * p.v_d


def deviation_after(p: LoopParams, delta_v0: float) -> float:
    """
    Steady-state deviation after one pulse as a function of the initial difference.

    Negative values mean over-compensation: the lower module ends up higher.
    """
    if delta_v0 <= p.v_d:
        return delta_v0
    k = classify_regime(p).overshoot_factor
    return -delta_v0 * k + p.v_d * (1.0 + k)


def _inductive_deviation(c: float, r: float, v_d: float, delta_v0: float, l: float) -> float:
    gap = 8.0 * l / c - r * r
    if gap <= 0.0:
        return v_d
    k = math.exp(-math.pi * r / math.sqrt(gap))
    return -delta_v0 * k + v_d * (1.0 + k)


def zero_deviation_inductance(c: float, r: float, v_d: float, delta_v0: float) -> float:
    """
    Inductance at which the loop ends with zero voltage deviation.

    Root-finds the inductive deviation expression on [R^2 C / 8, 1 H].

    Raises:
        DomainError: If delta_v0 <= v_d (the loop never engages).
        NoRootError: If the deviation does not change sign in the bracket.
    """
    if delta_v0 <= v_d:
        raise DomainError(f"delta_v0 ({delta_v0}) must exceed v_d ({v_d}) to engage the loop")
    lo = r * r * c / 8.0
    hi = 1.0
    f_lo = _inductive_deviation(c, r, v_d, delta_v0, lo)
    f_hi = _inductive_deviation(c, r, v_d, delta_v0, hi)
    if not f_lo * f_hi < 0.0:
        raise NoRootError(
            f"no zero-deviation inductance in [{lo:.3e}, {hi}] H "
            f"(deviation {f_lo:.3e} V -> {f_hi:.3e} V)"
        )
    root = optimize.brentq(
        lambda l: _inductive_deviation(c, r, v_d, delta_v0, l),
        lo,
        hi,
        xtol=1e-18,
        rtol=1e-13,
        maxiter=500,
    )
    logger.info("zero_deviation_inductance", c=c, r=r, v_d=v_d, delta_v0=delta_v0, l=root)
    return root
