# src/pipeline/verification.py

"""
Randomized closed-form versus ODE-oracle verification batch.

Draws loop parameters log-uniformly over L in [10 nH, 10 mH],
R in [1 mOhm, 1 Ohm], C in [100 uF, 100 mF], with V_d in [0, 3] V and an
initial difference in (V_d, 50] V. Each batch holds the same number of draws
in three families: resistance dominated, inductance dominated, and a
near-critical band within 5% of the regime boundary R^2 = 8L/C on either
side. Near-critical draws are additionally checked for continuity of the
closed-form results across the boundary.

Stiff draws, the ones the fixed-step integrator would need more than
``max_rk4_steps`` steps for, are integrated together in chunks by
``integrate_loop_batch``; the rest run one by one on the worker pool.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.core.ode_oracle import OracleConfig, OracleMethod, Trajectory, integrate_loop, integrate_loop_batch
from src.core.parallel_dynamics import LoopParams, classify_regime, equilibrate
from src.utils.exceptions import DomainError, OracleToleranceError
from src.utils.logging import get_logger

logger = get_logger(__name__)

VOLTAGE_TOL = 1e-3
ENERGY_TOL = 5e-3
T_END_TOL = 1e-3
CONTINUITY_TOL = 1e-3
BOUNDARY_OFFSET = 1e-3
# Below this overshoot factor the current approaches its zero too flatly to time the crossing.
MIN_TIMED_OVERSHOOT = 1e-4

FAMILIES = ("resistive", "inductive", "near_critical")
NEAR_CRITICAL_BAND = 0.05
MIN_BAND_OFFSET = 1e-4
L_RANGE = (1e-8, 1e-2)
R_RANGE = (1e-3, 1.0)
C_RANGE = (1e-4, 1e-1)
BATCH_CHUNK = 250


@dataclass(frozen=True)
class Draw:
    c: float
    r: float
    l: float
    v_d: float
    v1_0: float
    v2_0: float
    family: str = ""

    @property
    def params(self) -> LoopParams:
        return LoopParams(c=self.c, r=self.r, l=self.l, v_d=self.v_d)

    @property
    def delta_v0(self) -> float:
        return self.v1_0 - self.v2_0

    @property
    def boundary(self) -> bool:
        return self.family == "near_critical"


@dataclass(frozen=True)
class DrawCheck:
    """Deviations of one draw, relative to the initial difference (voltages) or the closed form (energy, time)."""

    draw: Draw
    regime: str
    engaged: bool
    voltage_dev: float
    energy_dev: float
    t_end_dev: Optional[float]
    continuity_dev: Optional[float]
    method: str

    def breaches(self) -> List[str]:
        out = []
        if self.voltage_dev > VOLTAGE_TOL:
            out.append(f"voltage deviation {self.voltage_dev:.3e} > {VOLTAGE_TOL}")
        if self.energy_dev > ENERGY_TOL:
            out.append(f"energy deviation {self.energy_dev:.3e} > {ENERGY_TOL}")
        if self.t_end_dev is not None and self.t_end_dev > T_END_TOL:
            out.append(f"end-time deviation {self.t_end_dev:.3e} > {T_END_TOL}")
        if self.continuity_dev is not None and self.continuity_dev > CONTINUITY_TOL:
            out.append(f"boundary discontinuity {self.continuity_dev:.3e} > {CONTINUITY_TOL}")
        return out


@dataclass
class VerificationReport:
    n_cases: int
    seed: int
    max_voltage_dev: float = 0.0
    max_energy_dev: float = 0.0
    max_t_end_dev: float = 0.0
    max_continuity_dev: float = 0.0
    regime_counts: Dict[str, int] = field(default_factory=dict)
    family_counts: Dict[str, int] = field(default_factory=dict)
    failures: List[Dict[str, Any]] = field(default_factory=list)
    checks: List[DrawCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> Dict[str, Any]:
        return {
            "n_cases": self.n_cases,
            "seed": self.seed,
            "passed": self.passed,
            "max_voltage_dev_rel": self.max_voltage_dev,
            "max_energy_dev_rel": self.max_energy_dev,
            "max_t_end_dev_rel": self.max_t_end_dev,
            "max_continuity_dev_rel": self.max_continuity_dev,
            "n_draws": len(self.checks),
            "regime_counts": dict(self.regime_counts),
            "family_counts": dict(self.family_counts),
            "failures": list(self.failures),
        }

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for check in self.checks:
            row = asdict(check.draw)
            row.update(
                regime=check.regime,
                engaged=check.engaged,
                method=check.method,
                voltage_dev_rel=check.voltage_dev,
                energy_dev_rel=check.energy_dev,
                t_end_dev_rel=check.t_end_dev,
                continuity_dev_rel=check.continuity_dev,
            )
            rows.append(row)
        return pd.DataFrame(rows)


def _log_uniform(rng: np.random.Generator, bounds: Tuple[float, float]) -> float:
    lo, hi = bounds
    return float(10 ** rng.uniform(math.log10(lo), math.log10(hi)))


def _draw_loop(rng: np.random.Generator, family: str) -> Tuple[float, float, float]:
    """Rejection-samples (c, r, l) inside the parameter box until the draw belongs to ``family``."""
    while True:
        c = _log_uniform(rng, C_RANGE)
        r = _log_uniform(rng, R_RANGE)
        l_star = r * r * c / 8.0
        if family == "near_critical":
            side = 1.0 if rng.random() < 0.5 else -1.0
            l = l_star * (1.0 + side * _log_uniform(rng, (MIN_BAND_OFFSET, NEAR_CRITICAL_BAND)))
            if L_RANGE[0] <= l <= L_RANGE[1]:
                return c, r, l
            continue
        l = _log_uniform(rng, L_RANGE)
        if (l <= l_star) == (family == "resistive"):
            return c, r, l


def draw_cases(n_per_family: int, seed: int) -> List[Draw]:
    """``n_per_family`` seeded draws of every family, interleaved resistive, inductive, near-critical."""
    rng = np.random.default_rng(seed)
    draws = []
    for idx in range(n_per_family * len(FAMILIES)):
        family = FAMILIES[idx % len(FAMILIES)]
        c, r, l = _draw_loop(rng, family)
        v_d = rng.uniform(0.0, 3.0)
        delta_v0 = v_d + (50.0 - v_d) * (1.0 - rng.random())
        v2_0 = rng.uniform(0.0, 50.0)
        draws.append(Draw(c=c, r=r, l=l, v_d=v_d, v1_0=v2_0 + delta_v0, v2_0=v2_0, family=family))
    return draws


def _continuity(draw: Draw) -> float:
    """Largest closed-form jump of final voltage difference or loss across the boundary."""
    l_star = draw.r * draw.r * draw.c / 8.0
    below = equilibrate(
        LoopParams(draw.c, draw.r, l_star * (1.0 - BOUNDARY_OFFSET), draw.v_d), draw.v1_0, draw.v2_0
    )
    above = equilibrate(
        LoopParams(draw.c, draw.r, l_star * (1.0 + BOUNDARY_OFFSET), draw.v_d), draw.v1_0, draw.v2_0
    )
    dv = abs(below.delta_v_inf - above.delta_v_inf) / draw.delta_v0
    de = abs(below.energy_loss - above.energy_loss) / max(below.energy_loss, 1e-300)
    return max(dv, de)


def check_draw(draw: Draw, max_rk4_steps: int = 2000, trajectory: Optional[Trajectory] = None) -> DrawCheck:
    """Compares the closed form with the oracle for one draw, integrating it unless ``trajectory`` is given."""
    p = draw.params
    outcome = equilibrate(p, draw.v1_0, draw.v2_0)
    regime = classify_regime(p)
    if trajectory is None:
        cfg = OracleConfig.for_loop(p, max_rk4_steps=max_rk4_steps)
        trajectory = integrate_loop(p, draw.v1_0, draw.v2_0, cfg)

    scale = max(abs(draw.delta_v0), 1e-12)
    x_closed = outcome.v2_end - draw.v2_0
    voltage_dev = abs(trajectory.transferred() - x_closed) / scale
    if outcome.engaged:
        oracle_loss = trajectory.dissipated_energy(p.l)
        energy_dev = abs(oracle_loss - outcome.energy_loss) / max(outcome.energy_loss, 1e-300)
    else:
        energy_dev = 0.0

    t_end_dev = None
    if outcome.engaged and not regime.resistive and regime.overshoot_factor > MIN_TIMED_OVERSHOOT:
        t_closed = math.pi / regime.beta
        t_end_dev = abs(trajectory.t_end - t_closed) / t_closed

    return DrawCheck(
        draw=draw,
        regime=regime.kind.value,
        engaged=outcome.engaged,
        voltage_dev=voltage_dev,
        energy_dev=energy_dev,
        t_end_dev=t_end_dev,
        continuity_dev=_continuity(draw) if draw.boundary and outcome.engaged else None,
        method=trajectory.method.value,
    )


def _is_stiff(draw: Draw, max_rk4_steps: int) -> bool:
    p = draw.params
    if not p.engaged(draw.v1_0, draw.v2_0):
        return False
    return OracleConfig.for_loop(p, max_rk4_steps=max_rk4_steps).resolved_method() is OracleMethod.RADAU


def _batch_checks(chunk: List[Draw]) -> List[DrawCheck]:
    trajectories = integrate_loop_batch([(d.params, d.v1_0, d.v2_0) for d in chunk])
    return [check_draw(d, trajectory=t) for d, t in zip(chunk, trajectories)]


def verify_oracle(
    n_cases: int,
    seed: int,
    max_rk4_steps: int = 2000,
    workers: int = 1,
    raise_on_breach: bool = True,
) -> VerificationReport:
    """
    Runs the randomized verification batch.

    Args:
        n_cases (int): Draws per family; the batch holds three times as many.
        seed (int): Seed of the draw generator.
        max_rk4_steps (int): Fixed-step budget above which a draw is stiff.
        workers (int): Worker threads.
        raise_on_breach (bool): Raise on the first report with breaches.

    Raises:
        DomainError: If n_cases < 1.
        OracleToleranceError: On any breach when ``raise_on_breach``; the
            error carries the first offending draw.
    """
    if n_cases < 1:
        raise DomainError(f"n_cases must be >= 1, got {n_cases}")
    draws = draw_cases(n_cases, seed)
    stiff = [k for k, d in enumerate(draws) if _is_stiff(d, max_rk4_steps)]
    stiff_set = set(stiff)
    plain = [k for k in range(len(draws)) if k not in stiff_set]
    chunks = [stiff[i : i + BATCH_CHUNK] for i in range(0, len(stiff), BATCH_CHUNK)]
    logger.info("verify_oracle_started", n_cases=n_cases, seed=seed, workers=workers, stiff=len(stiff))

    slots: List[Optional[DrawCheck]] = [None] * len(draws)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        batched = pool.map(lambda idx: _batch_checks([draws[k] for k in idx]), chunks)
        single = pool.map(lambda k: check_draw(draws[k], max_rk4_steps), plain)
        for idx, results in zip(chunks, batched):
            for k, check in zip(idx, results):
                slots[k] = check
        for k, check in zip(plain, single):
            slots[k] = check
    checks: List[DrawCheck] = slots  # type: ignore[assignment]

    report = VerificationReport(n_cases=n_cases, seed=seed, checks=checks)
    for check in checks:
        report.regime_counts[check.regime] = report.regime_counts.get(check.regime, 0) + 1
        family = check.draw.family
        report.family_counts[family] = report.family_counts.get(family, 0) + 1
        report.max_voltage_dev = max(report.max_voltage_dev, check.voltage_dev)
        report.max_energy_dev = max(report.max_energy_dev, check.energy_dev)
        if check.t_end_dev is not None:
            report.max_t_end_dev = max(report.max_t_end_dev, check.t_end_dev)
        if check.continuity_dev is not None:
            report.max_continuity_dev = max(report.max_continuity_dev, check.continuity_dev)
        reasons = check.breaches()
        if reasons:
            report.failures.append({"draw": asdict(check.draw), "reasons": reasons})

    logger.info("verify_oracle_finished", **{k: v for k, v in report.summary().items() if k != "failures"})
    if report.failures and raise_on_breach:
        first = report.failures[0]
        raise OracleToleranceError(
            f"{len(report.failures)} of {len(checks)} draws breached a tolerance; first: {'; '.join(first['reasons'])}",
            draw=first["draw"],
        )
    return report
