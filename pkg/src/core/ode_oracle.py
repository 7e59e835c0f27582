# src/core/ode_oracle.py

"""
Numerical integrator for the parallelization loop.

Integrates the three-state loop (i, v1, v2) plus a dissipated-energy
accumulator with a fixed-step fourth-order Runge-Kutta scheme and locates
the diode cutoff (first downward zero crossing of i) by bisection on the
final step. Strongly over-damped loops, where the fixed step would need
more than ``max_rk4_steps`` steps, are handed to ``scipy.integrate.solve_ivp``
(Radau) with a terminal zero-current event. Batches of such loops can be
solved together by ``integrate_loop_batch``.

Voltages are integrated as deviations from their initial values so that
small transfers keep full relative precision.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.sparse import csc_matrix

from src.core.parallel_dynamics import LoopParams, classify_regime
from src.utils.exceptions import DomainError
from src.utils.logging import get_logger

logger = get_logger(__name__)

State = Tuple[float, ...]
Derivative = Callable[[State], State]

BISECTION_MAX_ITER = 80


class EndReason(str, enum.Enum):
    ZERO_CROSSING = "ZeroCrossing"
    HORIZON = "Horizon"


class OracleMethod(str, enum.Enum):
    RK4 = "rk4"
    RADAU = "radau"
    AUTO = "auto"


def characteristic_time(p: LoopParams) -> float:
    """
    Shortest time scale of the loop.

    Resistive loops are limited by the fast root (and RC/2), inductive loops
    by the ringing period 2*pi/beta or, close to the boundary, the decay time.
    """
    regime = classify_regime(p)
    if regime.resistive:
        return min(p.r * p.c / 2.0, 1.0 / abs(regime.r2))
    return min(2.0 * math.pi / regime.beta, 1.0 / abs(regime.alpha))


def default_horizon(p: LoopParams) -> float:
    regime = classify_regime(p)
    if regime.resistive:
        return 30.0 / abs(regime.r1)
    return 2.0 * math.pi / regime.beta


@dataclass(frozen=True)
class OracleConfig:
    """
    Integration settings.

    Attributes:
        dt (float): Fixed RK4 step in seconds.
        t_max (float): Horizon in seconds.
        rel_tol (float): Relative tolerance of the crossing bisection and the Radau solver.
        zero_current_eps (float): Tolerated reverse current in amperes.
        method (OracleMethod): rk4, radau or auto.
        max_rk4_steps (int): Step budget above which auto switches to Radau.
    """

    dt: float
    t_max: float
    rel_tol: float = 1e-9
    zero_current_eps: float = 1e-9
    method: OracleMethod = OracleMethod.AUTO
    max_rk4_steps: int = 20000

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if not self.t_max > 0:
            raise DomainError(f"t_max must be > 0, got {self.t_max}")
        if not self.rel_tol > 0:
            raise DomainError(f"rel_tol must be > 0, got {self.rel_tol}")
        if self.max_rk4_steps < 1:
            raise DomainError(f"max_rk4_steps must be >= 1, got {self.max_rk4_steps}")
        object.__setattr__(self, "method", OracleMethod(self.method))

    @classmethod
    def for_loop(
        cls,
        p: LoopParams,
        dwell: Optional[float] = None,
        method: OracleMethod = OracleMethod.AUTO,
        max_rk4_steps: int = 20000,
        steps_per_tchar: int = 200,
    ) -> "OracleConfig":
        """Default step min(t_char/200, dwell/50) and regime horizon (or the dwell)."""
        dt = characteristic_time(p) / steps_per_tchar
        t_max = default_horizon(p)
        if dwell is not None:
            dt = min(dt, dwell / 50.0)
            t_max = dwell
        return cls(dt=dt, t_max=t_max, method=method, max_rk4_steps=max_rk4_steps)

    @property
    def estimated_steps(self) -> int:
        return int(math.ceil(self.t_max / self.dt))

    def resolved_method(self) -> OracleMethod:
        if self.method is not OracleMethod.AUTO:
            return self.method
        if self.estimated_steps <= self.max_rk4_steps:
            return OracleMethod.RK4
        return OracleMethod.RADAU


@dataclass(frozen=True)
class Trajectory:
    """
    Time-ordered loop trajectory.

    Voltages are kept as deviations ``dv1``/``dv2`` from ``v1_0``/``v2_0``;
    ``dissipated`` is the running integral of R*i^2 + V_d*i.
    """

    t: np.ndarray
    i: np.ndarray
    dv1: np.ndarray
    dv2: np.ndarray
    dissipated: np.ndarray
    v1_0: float
    v2_0: float
    end_reason: EndReason
    method: OracleMethod

    @property
    def v1(self) -> np.ndarray:
        return self.v1_0 + self.dv1

    @property
    def v2(self) -> np.ndarray:
        return self.v2_0 + self.dv2

    @property
    def samples(self) -> List[Tuple[float, float, float, float]]:
        return list(zip(self.t.tolist(), self.i.tolist(), self.v1.tolist(), self.v2.tolist()))

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def final(self) -> Tuple[float, float]:
        """Final (v1, v2)."""
        return float(self.v1[-1]), float(self.v2[-1])

    def transferred(self) -> float:
        """Voltage gained by the receiving capacitor."""
        return float(self.dv2[-1])

    def energy_loss(self, c1: float, c2: Optional[float] = None) -> float:
        """Capacitor energy given up between the first and last sample."""
        c2 = c1 if c2 is None else c2
        d1 = float(self.dv1[-1])
        d2 = float(self.dv2[-1])
        return -0.5 * c1 * d1 * (2.0 * self.v1_0 + d1) - 0.5 * c2 * d2 * (2.0 * self.v2_0 + d2)

    def dissipated_energy(self, l: float) -> float:
        """Integrated R*i^2 + V_d*i plus whatever is still stored in the inductor."""
        i_end = float(self.i[-1])
        return float(self.dissipated[-1]) + 0.5 * l * i_end * i_end

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t_s": self.t, "i_a": self.i, "v1_v": self.v1, "v2_v": self.v2})


@dataclass(frozen=True)
class LoopSystem:
    """
    Right-hand side of the loop with optional external draws.

    State is (i, dv1, dv2, e). ``draw1``/``draw2`` are currents taken out of
    capacitor 1 and 2 by the outside circuit.
    """

    r: float
    l: float
    v_d: float
    c1: float
    c2: float
    v1_0: float
    v2_0: float
    draw1: float = 0.0
    draw2: float = 0.0

    def __call__(self, y: State) -> State:
        i, dv1, dv2, _ = y
        forcing = (self.v1_0 + dv1) - (self.v2_0 + dv2) - self.v_d
        return (
            (forcing - self.r * i) / self.l,
            -(i + self.draw1) / self.c1,
            (i - self.draw2) / self.c2,
            self.r * i * i + self.v_d * i,
        )


def rk4_step(f: Derivative, y: State, h: float) -> State:
    """One classical fourth-order Runge-Kutta step of an autonomous system."""
    k1 = f(y)
    k2 = f(tuple(a + 0.5 * h * b for a, b in zip(y, k1)))
    k3 = f(tuple(a + 0.5 * h * b for a, b in zip(y, k2)))
    k4 = f(tuple(a + h * b for a, b in zip(y, k3)))
    return tuple(
        a + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
    )


def _bisect_crossing(f: Derivative, y: State, h: float, rel_tol: float, t0: float) -> Tuple[float, State]:
    """Sub-step length at which the RK4 step from ``y`` brings the current to zero."""
    lo, hi = 0.0, h
    for _ in range(BISECTION_MAX_ITER):
        if hi - lo <= rel_tol * max(t0 + hi, h):
            break
        mid = 0.5 * (lo + hi)
        if rk4_step(f, y, mid)[0] > 0.0:
            lo = mid
        else:
            hi = mid
    y_end = rk4_step(f, y, hi)
    return hi, (0.0,) + y_end[1:]


def _integrate_rk4(system: LoopSystem, cfg: OracleConfig) -> Tuple[List[float], List[State], EndReason]:
    y: State = (0.0, 0.0, 0.0, 0.0)
    t = 0.0
    times = [t]
    states = [y]
    started = False
    while t < cfg.t_max:
        h = min(cfg.dt, cfg.t_max - t)
        y_next = rk4_step(system, y, h)
        if y_next[0] > 0.0:
            started = True
        if started and y_next[0] <= 0.0:
            h_cross, y_cross = _bisect_crossing(system, y, h, cfg.rel_tol, t)
            times.append(t + h_cross)
            states.append(y_cross)
            return times, states, EndReason.ZERO_CROSSING
        t += h
        y = y_next
        times.append(t)
        states.append(y)
    return times, states, EndReason.HORIZON


def _zero_current(t: float, y: np.ndarray) -> float:
    return y[0]


_zero_current.terminal = True  # type: ignore[attr-defined]
_zero_current.direction = -1  # type: ignore[attr-defined]


def _integrate_radau(
    system: LoopSystem,
    cfg: OracleConfig,
    p: LoopParams,
) -> Tuple[List[float], List[State], EndReason]:
    drive = max(abs(system.v1_0 - system.v2_0 - system.v_d), 1e-12)
    i_scale = drive / max(p.r, math.sqrt(p.l / p.c))
    atol = np.array([i_scale, drive, drive, p.c * drive * drive]) * cfg.rel_tol * 1e-2

    sol = solve_ivp(
        lambda _t, y: system(tuple(y)),
        (0.0, cfg.t_max),
        np.zeros(4),
        method="Radau",
        events=_zero_current,
        rtol=cfg.rel_tol,
        atol=atol,
    )
    if not sol.success:
        logger.warning("radau_failed", message=sol.message)
    reason = EndReason.ZERO_CROSSING if sol.status == 1 else EndReason.HORIZON
    states = [tuple(col) for col in sol.y.T]
    if reason is EndReason.ZERO_CROSSING:
        states[-1] = (0.0,) + states[-1][1:]
    return sol.t.tolist(), states, reason


def _trajectory(
    times: Sequence[float],
    states: Sequence[State],
    v1_0: float,
    v2_0: float,
    reason: EndReason,
    method: OracleMethod,
) -> Trajectory:
    arr = np.asarray(states, dtype=float).reshape(-1, 4)
    return Trajectory(
        t=np.asarray(times, dtype=float),
        i=arr[:, 0],
        dv1=arr[:, 1],
        dv2=arr[:, 2],
        dissipated=arr[:, 3],
        v1_0=v1_0,
        v2_0=v2_0,
        end_reason=reason,
        method=method,
    )


def integrate_loaded_loop(
    p: LoopParams,
    v1_0: float,
    v2_0: float,
    i_load: float,
    cfg: OracleConfig,
    on_receiver: bool = True,
    c2: Optional[float] = None,
) -> Trajectory:
    """
    Integrates the loop with a constant external draw on one capacitor.

    Args:
        p (LoopParams): Loop parameters; ``p.c`` is the source capacitance.
        v1_0, v2_0 (float): Initial source and receiver voltages.
        i_load (float): Current drawn out of the loaded capacitor (either sign).
        cfg (OracleConfig): Integration settings.
        on_receiver (bool): Draw from capacitor 2 (default) or capacitor 1.
        c2 (Optional[float]): Receiver capacitance when it differs from ``p.c``.

    Returns:
        Trajectory: Ends at the diode cutoff or at the horizon. A loop that is
        not forward biased carries no current and the loaded capacitor drifts
        linearly at i_load / C over the horizon.
    """
    c_2 = p.c if c2 is None else c2
    draw1, draw2 = (0.0, i_load) if on_receiver else (i_load, 0.0)

    if not p.engaged(v1_0, v2_0):
        t_end = cfg.t_max if i_load != 0.0 else 0.0
        times = [0.0] if t_end == 0.0 else [0.0, t_end]
        states: List[State] = [(0.0, 0.0, 0.0, 0.0)]
        if t_end > 0.0:
            states.append((0.0, -draw1 * t_end / p.c, -draw2 * t_end / c_2, 0.0))
        return _trajectory(times, states, v1_0, v2_0, EndReason.HORIZON, OracleMethod.RK4)

    system = LoopSystem(
        r=p.r, l=p.l, v_d=p.v_d, c1=p.c, c2=c_2, v1_0=v1_0, v2_0=v2_0, draw1=draw1, draw2=draw2
    )
    method = cfg.resolved_method()
    if method is OracleMethod.RK4:
        times, states, reason = _integrate_rk4(system, cfg)
    else:
        times, states, reason = _integrate_radau(system, cfg, p)
    logger.debug(
        "integrate_loop",
        method=method.value,
        end_reason=reason.value,
        samples=len(times),
        t_end=times[-1],
    )
    return _trajectory(times, states, v1_0, v2_0, reason, method)


def integrate_loop(p: LoopParams, v1_0: float, v2_0: float, cfg: OracleConfig) -> Trajectory:
    """
    Integrates the isolated loop from i(0) = 0 until the diode cuts off.

    A loop that is not forward biased (v1_0 <= v2_0 + v_d) returns a single
    zero-current sample.
    """
    return integrate_loaded_loop(p, v1_0, v2_0, 0.0, cfg)


def integrate_loop_batch(
    loops: Sequence[Tuple[LoopParams, float, float]],
    rel_tol: float = 1e-9,
) -> List[Trajectory]:
    """
    Integrates many isolated loops in one stiff Radau solve.

    Each loop runs on its own clock, normalized by its regime horizon, and is
    scaled by its drive voltage, its drive current and C times the drive
    squared, so the batch forms one block-diagonal system with a sparse
    Jacobian. The diode cutoff of every loop is then located on the dense
    output by Brent's method.

    Args:
        loops: (params, v1_0, v2_0) per loop.
        rel_tol (float): Relative tolerance of the solver.

    Returns:
        List[Trajectory]: One per loop, in input order. Loops that are not
        forward biased get the single zero-current sample of ``integrate_loop``.
    """
    out: List[Optional[Trajectory]] = [None] * len(loops)
    active = []
    for k, (p, v1_0, v2_0) in enumerate(loops):
        if p.engaged(v1_0, v2_0):
            active.append(k)
        else:
            out[k] = integrate_loop(p, v1_0, v2_0, OracleConfig.for_loop(p))
    if not active:
        return out  # type: ignore[return-value]

    params = [loops[k][0] for k in active]
    c = np.array([p.c for p in params])
    r = np.array([p.r for p in params])
    l = np.array([p.l for p in params])
    v_d = np.array([p.v_d for p in params])
    drive = np.array([loops[k][1] - loops[k][2] for k in active]) - v_d
    i_scale = drive / np.maximum(r, np.sqrt(l / c))
    e_scale = c * drive * drive
    horizon = np.array([default_horizon(p) for p in params])

    a = horizon * drive / (i_scale * l)
    b = horizon * r / l
    g = horizon * i_scale / (c * drive)
    q2 = horizon * r * i_scale * i_scale / e_scale
    q1 = horizon * v_d * i_scale / e_scale

    n = len(active)
    base = 4 * np.arange(n)
    rows = (base[:, None] + np.array([0, 0, 0, 1, 2, 3])).ravel()
    cols = (base[:, None] + np.array([0, 1, 2, 0, 0, 0])).ravel()

    def rhs(_tau: float, y: np.ndarray) -> np.ndarray:
        s = y.reshape(n, 4)
        i = s[:, 0]
        dy = np.empty_like(s)
        dy[:, 0] = a * (1.0 + s[:, 1] - s[:, 2]) - b * i
        dy[:, 1] = -g * i
        dy[:, 2] = g * i
        dy[:, 3] = (q2 * i + q1) * i
        return dy.ravel()

    def jac(_tau: float, y: np.ndarray) -> csc_matrix:
        i = y[0::4]
        data = np.column_stack((-b, a, -a, -g, g, 2.0 * q2 * i + q1)).ravel()
        return csc_matrix((data, (rows, cols)), shape=(4 * n, 4 * n))

    sol = solve_ivp(
        rhs,
        (0.0, 1.0),
        np.zeros(4 * n),
        method="Radau",
        jac=jac,
        rtol=rel_tol,
        atol=rel_tol * 1e-2,
        dense_output=True,
    )
    if not sol.success:
        logger.warning("radau_batch_failed", message=sol.message, loops=n)

    scales = np.column_stack((i_scale, drive, drive, e_scale))
    for j, k in enumerate(active):
        p, v1_0, v2_0 = loops[k]
        block = sol.y[4 * j : 4 * j + 4]
        current = block[0]
        m = _first_cutoff(current)
        if m is None:
            taus = sol.t
            states = block.T * scales[j]
            reason = EndReason.HORIZON
        else:
            tau_cut = _cutoff_time(lambda tau: float(sol.sol(tau)[4 * j]), sol.t[m - 1], sol.t[m])
            cut = sol.sol(tau_cut)[4 * j : 4 * j + 4] * scales[j]
            cut[0] = 0.0
            taus = np.append(sol.t[:m], tau_cut)
            states = np.vstack((block[:, :m].T * scales[j], cut))
            reason = EndReason.ZERO_CROSSING
        out[k] = Trajectory(
            t=taus * horizon[j],
            i=states[:, 0],
            dv1=states[:, 1],
            dv2=states[:, 2],
            dissipated=states[:, 3],
            v1_0=v1_0,
            v2_0=v2_0,
            end_reason=reason,
            method=OracleMethod.RADAU,
        )
    logger.debug("integrate_loop_batch", loops=len(loops), engaged=n, steps=len(sol.t))
    return out  # type: ignore[return-value]


def _first_cutoff(current: np.ndarray) -> Optional[int]:
    """Index of the first step at or below zero after the current has risen."""
    rising = np.flatnonzero(current > 0.0)
    if not rising.size:
        return None
    start = int(rising[0])
    below = np.flatnonzero(current[start:] <= 0.0)
    return start + int(below[0]) if below.size else None


def _cutoff_time(current: Callable[[float], float], lo: float, hi: float) -> float:
    if current(lo) > 0.0 and current(hi) < 0.0:
        return float(brentq(current, lo, hi, xtol=1e-15))
    return float(hi)
