# src/core/converter_sim.py

"""
Time-stepped simulation of an N-module DiSeP string.

Every sub-step applies one mode command: the series modules form the
string that feeds the resistive load, links commanded parallel exchange
charge through their RLC-diode loops (integrated with RK4 sub-steps) and
the supplied module is clamped to, or charged from, the dc source. Losses
are tallied by category so that

    energy_in = delivered + conduction + switching + parallelization + source + delta_stored

holds for every run.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.circuit import favorable_direction, solve_string_current
from src.core.models import (
    DEFAULT_DEVICE_PATHS,
    ConnectionMode,
    ConverterConfig,
    DevicePathTable,
    SupplyMode,
)
from src.core.modulation import (
    LatchScope,
    LatchState,
    ModeCommand,
    ModulatorConfig,
    map_levels_to_modes,
    psc_level_grid,
)
from src.core.ode_oracle import BISECTION_MAX_ITER, Derivative, characteristic_time, rk4_step
from src.core.parallel_dynamics import LoopParams
from src.utils.exceptions import DomainError, NotSettledError, SimulationDivergenceError
from src.utils.logging import get_logger

logger = get_logger(__name__)

MODE_CODES: Dict[ConnectionMode, int] = {mode: code for code, mode in enumerate(ConnectionMode)}

# Finest sub-step allowed per carrier period.
MIN_OVERSAMPLE = 20

# Diode cutoff located to this fraction of a loop sub-step.
CUTOFF_REL_TOL = 1e-9


@dataclass(frozen=True)
class SimOptions:
    """
    Simulation knobs.

    Attributes:
        oversample (int): Sub-steps per carrier period (>= 20).
        load_coupled (bool): Include series draws in the loop dynamics of a parallel dwell.
        e_sw (float): Switching energy per device transition in joules.
        transitions_per_change (int): Device transitions per link mode change.
        sample_every (int): Trace decimation in sub-steps.
        settle_tol (float): Relative change of per-period mean voltages counted as settled.
        max_voltage (Optional[float]): Divergence guard; defaults to ten times the largest
            supply or initial voltage.
        device_paths (DevicePathTable): Conduction path matrix.
        latch_scope (LatchScope): Parallel-polarity latch wiring.
        substeps_per_tchar (int): Loop sub-steps per characteristic loop time.
    """

    oversample: int = 50
    load_coupled: bool = True
    e_sw: float = 2e-6
    transitions_per_change: int = 2
    sample_every: int = 1
    settle_tol: float = 1e-3
    max_voltage: Optional[float] = None
    device_paths: DevicePathTable = DEFAULT_DEVICE_PATHS
    latch_scope: LatchScope = LatchScope.STRING
    substeps_per_tchar: int = 20

    def __post_init__(self) -> None:
        if self.oversample < MIN_OVERSAMPLE:
            raise DomainError(f"oversample must be >= {MIN_OVERSAMPLE}, got {self.oversample}")
        if self.e_sw < 0:
            raise DomainError(f"e_sw must be >= 0, got {self.e_sw}")
        if self.transitions_per_change < 0:
            raise DomainError("transitions_per_change must be >= 0")
        if self.sample_every < 1:
            raise DomainError(f"sample_every must be >= 1, got {self.sample_every}")
        if not self.settle_tol > 0:
            raise DomainError(f"settle_tol must be > 0, got {self.settle_tol}")
        if self.substeps_per_tchar < 1:
            raise DomainError("substeps_per_tchar must be >= 1")
        object.__setattr__(self, "latch_scope", LatchScope(self.latch_scope))


@dataclass
class LossBreakdown:
    """
    Loss accumulators in joules.

    ``transition_count`` holds one tally per mode slot: slot 0 is the
    terminal half-link, slot k the link between modules k-1 and k.
    """

    conduction_j: float = 0.0
    switching_j: float = 0.0
    parallelization_j: float = 0.0
    source_j: float = 0.0
    transition_count: List[int] = field(default_factory=list)

    @property
    def total_j(self) -> float:
        return self.conduction_j + self.switching_j + self.parallelization_j + self.source_j

    @property
    def transitions(self) -> int:
        return sum(self.transition_count)

    def to_dict(self) -> Dict[str, object]:
        return {
            "conduction_j": self.conduction_j,
            "switching_j": self.switching_j,
            "parallelization_j": self.parallelization_j,
            "source_j": self.source_j,
            "total_j": self.total_j,
            "transition_count": list(self.transition_count),
        }


@dataclass
class SimState:
    """
    Evolving string state.

    ``link_currents`` are signed: positive current flows from module k to
    module k+1. ``active_loops`` marks links whose diode is conducting.
    """

    t: float
    v_caps: List[float]
    link_currents: List[float]
    active_loops: List[bool]
    loss_acc: LossBreakdown
    slot_modes: Optional[Tuple[ConnectionMode, ...]] = None
    energy_in_j: float = 0.0
    energy_load_j: float = 0.0
    v_out: float = 0.0
    i_out: float = 0.0

    @classmethod
    def initial(cls, config: ConverterConfig) -> "SimState":
        v = [m.v_init for m in config.modules]
        if config.supply_mode is SupplyMode.CLAMP:
            v[config.supply_index] = config.v_supply
        return cls(
            t=0.0,
            v_caps=v,
            link_currents=[0.0] * (config.n_modules - 1),
            active_loops=[False] * (config.n_modules - 1),
            loss_acc=LossBreakdown(transition_count=[0] * config.n_modules),
        )

    def stored_energy(self, config: ConverterConfig) -> float:
        return sum(0.5 * m.capacitance * v * v for m, v in zip(config.modules, self.v_caps))


@dataclass(frozen=True)
class PeriodLedger:
    """
    Cumulative energies at the end of every fundamental period.

    Row 0 is the initial state, row p the end of period p.
    """

    energy_in: np.ndarray
    delivered: np.ndarray
    conduction: np.ndarray
    switching: np.ndarray
    parallelization: np.ndarray
    source: np.ndarray
    stored: np.ndarray
    transitions: np.ndarray

    @property
    def n_periods(self) -> int:
        return len(self.energy_in) - 1

    def window(self, k_periods: int) -> Dict[str, float]:
        """Energy totals over the last ``k_periods`` periods (all periods if fewer)."""
        k = max(1, min(k_periods, self.n_periods))
        out = {}
        for name in ("energy_in", "delivered", "conduction", "switching", "parallelization", "source", "stored"):
            series = getattr(self, name)
            out[name] = float(series[-1] - series[-1 - k])
        out["transitions"] = float(self.transitions[-1] - self.transitions[-1 - k])
        out["periods"] = float(k)
        return out

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "period": np.arange(len(self.energy_in)),
                "energy_in_j": self.energy_in,
                "delivered_j": self.delivered,
                "conduction_j": self.conduction,
                "switching_j": self.switching,
                "parallelization_j": self.parallelization,
                "source_j": self.source,
                "stored_j": self.stored,
                "transitions": self.transitions,
            }
        )


@dataclass(frozen=True)
class SimResult:
    """
    Sampled output of a run.

    Traces are sampled every ``sample_every`` sub-steps and span exactly
    ``n_periods`` fundamental periods, ``samples_per_period`` each.
    """

    config: ConverterConfig
    options: SimOptions
    dt: float
    steps_per_period: int
    samples_per_period: int
    n_periods: int
    t: np.ndarray
    v_out: np.ndarray
    i_out: np.ndarray
    v_caps: np.ndarray
    link_currents: np.ndarray
    slot_modes: np.ndarray
    loss: LossBreakdown
    energy_in_j: float
    energy_delivered_j: float
    stored_initial_j: float
    stored_final_j: float
    period_means: np.ndarray
    ledger: PeriodLedger
    settled: bool

    @property
    def output_waveform(self) -> np.ndarray:
        """(t, v_out, i_out) columns."""
        return np.column_stack([self.t, self.v_out, self.i_out])

    @property
    def energy_residual_j(self) -> float:
        """energy_in - delivered - losses - delta_stored."""
        return (
            self.energy_in_j
            - self.energy_delivered_j
            - self.loss.total_j
            - (self.stored_final_j - self.stored_initial_j)
        )

    def last_periods(self, k_periods: int) -> slice:
        k = max(1, min(k_periods, self.n_periods))
        return slice(len(self.t) - k * self.samples_per_period, len(self.t))

    def waveform_frame(self) -> pd.DataFrame:
        data = {"t_s": self.t, "v_out_v": self.v_out, "i_out_a": self.i_out}
        for k in range(self.v_caps.shape[1]):
            data[f"v_cap_{k}_v"] = self.v_caps[:, k]
        for k in range(self.link_currents.shape[1]):
            data[f"i_link_{k}_a"] = self.link_currents[:, k]
        return pd.DataFrame(data)

    def mode_frame(self, k_periods: int = 1) -> pd.DataFrame:
        """Applied commands over the last ``k_periods``: t_s, level_k, mode_terminal, mode_link_k."""
        window = self.last_periods(k_periods)
        modes = list(ConnectionMode)
        codes = self.slot_modes[window]
        data: Dict[str, object] = {"t_s": self.t[window]}
        for k in range(codes.shape[1]):
            data[f"level_{k}"] = [_sign(modes[c]) for c in codes[:, k]]
        data["mode_terminal"] = [modes[c].value for c in codes[:, 0]]
        for k in range(1, codes.shape[1]):
            data[f"mode_link_{k - 1}"] = [modes[c].value for c in codes[:, k]]
        return pd.DataFrame(data)

    def period_frame(self) -> pd.DataFrame:
        frame = self.ledger.to_frame()
        for k in range(self.period_means.shape[1]):
            means = np.concatenate([[np.nan], self.period_means[:, k]])
            frame[f"mean_v_cap_{k}_v"] = means
        return frame

    def to_frames(self) -> Dict[str, pd.DataFrame]:
        return {"waveforms": self.waveform_frame(), "periods": self.period_frame()}


def _sign(mode: ConnectionMode) -> int:
    if mode is ConnectionMode.SERIES_PLUS:
        return 1
    if mode is ConnectionMode.SERIES_MINUS:
        return -1
    return 0


def _bisect_cutoff(
    system: Derivative,
    y: Tuple[float, ...],
    h: float,
    slots: Sequence[int],
) -> Tuple[float, Tuple[float, ...]]:
    """Shortest RK4 step from ``y`` that brings any loop current in ``slots`` to zero."""
    lo, hi = 0.0, h
    for _ in range(BISECTION_MAX_ITER):
        if hi - lo <= CUTOFF_REL_TOL * h:
            break
        mid = 0.5 * (lo + hi)
        y_mid = rk4_step(system, y, mid)
        if any(y_mid[s] <= 0.0 for s in slots):
            hi = mid
        else:
            lo = mid
    return hi, rk4_step(system, y, hi)


def _loop_ends(mode: ConnectionMode, link: int) -> Tuple[int, int]:
    """(source, sink) of a parallel link: ParallelMinus charges k+1 from k, ParallelPlus the reverse."""
    if mode is ConnectionMode.PARALLEL_MINUS:
        return link, link + 1
    return link + 1, link


class ConverterSimulator:
    """
    Advances a SimState under mode commands for one converter configuration.

    The simulator holds only immutable per-configuration data; the state
    passed to ``advance`` is owned by the caller.
    """

    def __init__(self, config: ConverterConfig, options: Optional[SimOptions] = None) -> None:
        self.config = config
        self.options = options or SimOptions()
        self.caps = [m.capacitance for m in config.modules]
        self.devices = [m.devices for m in config.modules]
        self.r_loop = [link.r_loop for link in config.links]
        self.l_loop = [link.l_loop for link in config.links]
        self.vd_loop = [link.v_d_loop for link in config.links]
        self.h_max = [
            characteristic_time(
                LoopParams(
                    c=min(self.caps[j], self.caps[j + 1]),
                    r=link.r_loop,
                    l=link.l_loop,
                    v_d=link.v_d_loop,
                )
            )
            / self.options.substeps_per_tchar
            for j, link in enumerate(config.links)
        ]
        if self.options.max_voltage is not None:
            self.max_voltage = self.options.max_voltage
        else:
            self.max_voltage = 10.0 * max([config.v_supply, 1.0] + [m.v_init for m in config.modules])
        self.switch_energy = self.options.transitions_per_change * self.options.e_sw

    # -- per-step pieces -------------------------------------------------

    def _apply_transitions(self, state: SimState, modes: Tuple[ConnectionMode, ...]) -> None:
        previous = state.slot_modes
        state.slot_modes = modes
        if previous is None:
            return
        loss = state.loss_acc
        for k, (old, new) in enumerate(zip(previous, modes)):
            if old is new:
                continue
            loss.transition_count[k] += 1
            if self.switch_energy > 0.0:
                v = state.v_caps[k]
                c = self.caps[k]
                drawn = min(self.switch_energy, 0.5 * c * v * v)
                state.v_caps[k] = math.sqrt(max(v * v - 2.0 * drawn / c, 0.0))
                loss.switching_j += drawn
            if k > 0 and state.link_currents[k - 1] != 0.0:
                # Cut-off loop: the inductor energy is lost in the switches.
                i = state.link_currents[k - 1]
                loss.parallelization_j += 0.5 * self.l_loop[k - 1] * i * i
                state.link_currents[k - 1] = 0.0
                state.active_loops[k - 1] = False

    def _string(self, state: SimState, modes: Tuple[ConnectionMode, ...]) -> Tuple[float, float, float]:
        """(v_out, i_out, conduction drop) of the series string."""
        v_source = 0.0
        for mode, v in zip(modes, state.v_caps):
            s = _sign(mode)
            if s:
                v_source += s * v
        r_load = self.config.r_load
        if math.isinf(r_load):
            return v_source, 0.0, 0.0
        if v_source == 0.0:
            return 0.0, 0.0, 0.0
        direction = 1 if v_source > 0 else -1
        table = self.options.device_paths
        paths = [table.lookup(mode, favorable_direction(mode, direction)) for mode in modes]
        magnitude, drop = solve_string_current(v_source, r_load, paths, self.devices)
        i_out = direction * magnitude
        return r_load * i_out, i_out, drop

    def _active_links(self, state: SimState, modes: Tuple[ConnectionMode, ...]) -> List[Tuple[int, int, int]]:
        active = []
        v = state.v_caps
        for j in range(len(self.r_loop)):
            mode = modes[j + 1]
            if not mode.is_parallel:
                continue
            src, sink = _loop_ends(mode, j)
            if state.link_currents[j] != 0.0 or v[src] - v[sink] > self.vd_loop[j]:
                active.append((j, src, sink))
        return active

    def _run_loops(
        self,
        state: SimState,
        active: List[Tuple[int, int, int]],
        draws: Sequence[float],
        dt: float,
    ) -> None:
        n = len(state.v_caps)
        caps = self.caps
        h_max = min(self.h_max[j] for j, _, _ in active)
        h = dt / max(1, int(math.ceil(dt / h_max)))
        currents = {j: abs(state.link_currents[j]) for j, _, _ in active}
        loss = state.loss_acc
        t_left = dt

        while active and t_left > CUTOFF_REL_TOL * dt:
            y = tuple(state.v_caps) + tuple(currents[j] for j, _, _ in active) + (0.0,)
            system = self._loop_system(active, draws)
            slots = [n + idx for idx in range(len(active))]
            ended: List[int] = []
            while t_left > CUTOFF_REL_TOL * dt and not ended:
                h_k = min(h, t_left)
                y_next = rk4_step(system, y, h_k)
                if any(y_next[s] <= 0.0 for s in slots):
                    h_k, y_next = _bisect_cutoff(system, y, h_k, slots)
                    ended = [j for (j, _, _), s in zip(active, slots) if y_next[s] <= 0.0]
                y = y_next
                t_left -= h_k
            state.v_caps = list(y[:n])
            loss.parallelization_j += max(y[-1], 0.0)
            for (j, _, _), s in zip(active, slots):
                if y[s] < 0.0:
                    # Residual reverse current left by the bisection tolerance.
                    loss.parallelization_j += 0.5 * self.l_loop[j] * y[s] * y[s]
                currents[j] = max(y[s], 0.0)
            active = [entry for entry in active if entry[0] not in ended]
            for j in ended:
                currents[j] = 0.0

        if t_left > 0.0:
            # Every loop has cut off; the rest of the step is a plain discharge.
            for k in range(n):
                if draws[k]:
                    state.v_caps[k] -= draws[k] * t_left / caps[k]

        assert state.slot_modes is not None
        for j, current in currents.items():
            sign = 1.0 if _loop_ends(state.slot_modes[j + 1], j)[0] == j else -1.0
            state.link_currents[j] = sign * current
            state.active_loops[j] = current > 0.0

    def _loop_system(self, active: List[Tuple[int, int, int]], draws: Sequence[float]):
        n = len(self.caps)
        caps = self.caps
        r_loop, l_loop, vd_loop = self.r_loop, self.l_loop, self.vd_loop

        def derivative(y: Tuple[float, ...]) -> Tuple[float, ...]:
            dv = [-draws[k] / caps[k] for k in range(n)]
            di = []
            de = 0.0
            for idx, (j, src, sink) in enumerate(active):
                i = y[n + idx]
                dv[src] -= i / caps[src]
                dv[sink] += i / caps[sink]
                di.append((y[src] - y[sink] - vd_loop[j] - r_loop[j] * i) / l_loop[j])
                de += r_loop[j] * i * i + vd_loop[j] * i
            return tuple(dv) + tuple(di) + (de,)

        return derivative

    def _supply(self, state: SimState, dt: float) -> None:
        cfg = self.config
        k = cfg.supply_index
        c = self.caps[k]
        if cfg.supply_mode is SupplyMode.CLAMP:
            v = state.v_caps[k]
            state.energy_in_j += 0.5 * c * (cfg.v_supply * cfg.v_supply - v * v)
            state.v_caps[k] = cfg.v_supply
        elif cfg.supply_mode is SupplyMode.RESISTIVE:
            r_src = float(cfg.r_src)  # validated > 0 for this mode
            i_src = (cfg.v_supply - state.v_caps[k]) / r_src
            state.v_caps[k] += i_src * dt / c
            state.energy_in_j += cfg.v_supply * i_src * dt
            state.loss_acc.source_j += r_src * i_src * i_src * dt

    # -- public API --------------------------------------------------------

    def advance(self, state: SimState, command: ModeCommand, dt: float) -> SimState:
        """Advances ``state`` in place by one sub-step and returns it."""
        modes = command.slot_modes
        if len(modes) != self.config.n_modules:
            raise DomainError(f"command carries {len(modes)} slots for {self.config.n_modules} modules")
        self._apply_transitions(state, modes)

        v_out, i_out, drop = self._string(state, modes)
        loss = state.loss_acc
        loss.conduction_j += drop * abs(i_out) * dt
        state.energy_load_j += v_out * i_out * dt
        state.v_out, state.i_out = v_out, i_out

        draws = [_sign(mode) * i_out for mode in modes]
        active = self._active_links(state, modes)
        if active:
            if self.options.load_coupled:
                self._run_loops(state, active, draws, dt)
            else:
                self._discharge(state, draws, dt)
                self._run_loops(state, active, [0.0] * len(draws), dt)
        else:
            self._discharge(state, draws, dt)

        self._supply(state, dt)

        v = state.v_caps
        for k in range(len(v)):
            if v[k] < 0.0:
                v[k] = 0.0
            elif v[k] > self.max_voltage:
                raise SimulationDivergenceError(
                    f"module {k} reached {v[k]:.3f} V (guard {self.max_voltage:.3f} V) at t={state.t:.6e} s"
                )
        state.t += dt
        return state

    def _discharge(self, state: SimState, draws: Sequence[float], dt: float) -> None:
        for k, d in enumerate(draws):
            if d:
                state.v_caps[k] -= d * dt / self.caps[k]


def step(
    config: ConverterConfig,
    state: SimState,
    command: ModeCommand,
    dt: float,
    options: Optional[SimOptions] = None,
) -> SimState:
    """
    One sub-step of the string; returns a new state and leaves ``state`` untouched.

    Raises:
        DomainError: If dt exceeds a twentieth of the carrier period.
        SimulationDivergenceError: If a module voltage exceeds the guard.
    """
    if not 0 < dt <= 1.0 / (config.f_carrier * MIN_OVERSAMPLE) * (1 + 1e-12):
        raise DomainError(f"dt must be in (0, 1/(20 f_carrier)], got {dt}")
    return ConverterSimulator(config, options).advance(copy.deepcopy(state), command, dt)


def step_grid(config: ConverterConfig, options: SimOptions, horizon: float) -> Tuple[int, int, float]:
    """
    (steps_per_period, n_periods, dt) for a horizon.

    The sub-step is snapped so that an integer number of sub-steps (and of
    trace samples) spans one fundamental period.
    """
    if not horizon > 0:
        raise DomainError(f"horizon must be > 0, got {horizon}")
    se = options.sample_every
    per_period = config.f_carrier * options.oversample / config.f_out
    steps_per_period = int(math.ceil(per_period / se - 1e-9)) * se
    n_periods = max(1, int(math.ceil(horizon * config.f_out - 1e-9)))
    return steps_per_period, n_periods, 1.0 / (config.f_out * steps_per_period)


def _is_settled(period_means: np.ndarray, tol: float) -> bool:
    if len(period_means) < 2:
        return False
    last, prev = period_means[-1], period_means[-2]
    scale = np.maximum(np.abs(prev), 1e-9)
    return bool(np.all(np.abs(last - prev) / scale < tol))


def run(
    config: ConverterConfig,
    modulator: Optional[ModulatorConfig],
    horizon: float,
    options: Optional[SimOptions] = None,
) -> SimResult:
    """
    Simulates the string over ``horizon`` seconds (rounded up to whole periods).

    Returns:
        SimResult: Traces, losses and the per-period ledger. ``settled`` is
        False when the per-period mean module voltages still moved by more
        than ``settle_tol`` between the last two periods.
    """
    options = options or SimOptions()
    modulator = modulator or ModulatorConfig.from_converter(config)
    if modulator.n_modules != config.n_modules:
        raise DomainError(f"modulator has {modulator.n_modules} modules, converter {config.n_modules}")

    steps_per_period, n_periods, dt = step_grid(config, options, horizon)
    n_steps = steps_per_period * n_periods
    se = options.sample_every
    samples_per_period = steps_per_period // se
    n_samples = n_steps // se
    n = config.n_modules

    logger.info(
        "simulation_started",
        n_modules=n,
        periods=n_periods,
        steps=n_steps,
        dt=dt,
        f_carrier=config.f_carrier,
        load_coupled=options.load_coupled,
    )

    times = np.arange(n_steps) * dt
    levels = psc_level_grid(modulator, times)
    changes = np.flatnonzero(np.any(levels[1:] != levels[:-1], axis=1)) + 1
    change_set = set(changes.tolist())
    change_set.add(0)

    sim = ConverterSimulator(config, options)
    state = SimState.initial(config)
    stored_initial = state.stored_energy(config)
    latch = LatchState.initial(n, options.latch_scope)

    rec_t = times[::se].copy()
    rec_v_out = np.zeros(n_samples)
    rec_i_out = np.zeros(n_samples)
    rec_caps = np.zeros((n_samples, n))
    rec_links = np.zeros((n_samples, n - 1))
    rec_modes = np.zeros((n_samples, n), dtype=np.int8)

    period_means = np.zeros((n_periods, n))
    ledger_rows: List[Tuple[float, ...]] = [(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, stored_initial, 0.0)]
    period_sum = [0.0] * n

    command: Optional[ModeCommand] = None
    mode_codes: List[int] = []
    for k in range(n_steps):
        if k in change_set:
            command, latch = map_levels_to_modes(levels[k].tolist(), latch, float(times[k]))
            mode_codes = [MODE_CODES[m] for m in command.slot_modes]
        assert command is not None

        if k % se == 0:
            s = k // se
            rec_caps[s] = state.v_caps
            rec_links[s] = state.link_currents
            rec_modes[s] = mode_codes
        period_sum = [a + b for a, b in zip(period_sum, state.v_caps)]

        sim.advance(state, command, dt)

        if k % se == 0:
            rec_v_out[s] = state.v_out
            rec_i_out[s] = state.i_out

        if (k + 1) % steps_per_period == 0:
            p = (k + 1) // steps_per_period - 1
            period_means[p] = np.asarray(period_sum) / steps_per_period
            period_sum = [0.0] * n
            loss = state.loss_acc
            ledger_rows.append(
                (
                    state.energy_in_j,
                    state.energy_load_j,
                    loss.conduction_j,
                    loss.switching_j,
                    loss.parallelization_j,
                    loss.source_j,
                    state.stored_energy(config),
                    float(loss.transitions),
                )
            )
            logger.debug("period_completed", period=p, means=period_means[p].round(4).tolist())

    rows = np.asarray(ledger_rows)
    ledger = PeriodLedger(*(rows[:, c] for c in range(rows.shape[1])))
    settled = _is_settled(period_means, options.settle_tol)
    result = SimResult(
        config=config,
        options=options,
        dt=dt,
        steps_per_period=steps_per_period,
        samples_per_period=samples_per_period,
        n_periods=n_periods,
        t=rec_t,
        v_out=rec_v_out,
        i_out=rec_i_out,
        v_caps=rec_caps,
        link_currents=rec_links,
        slot_modes=rec_modes,
        loss=copy.deepcopy(state.loss_acc),
        energy_in_j=state.energy_in_j,
        energy_delivered_j=state.energy_load_j,
        stored_initial_j=stored_initial,
        stored_final_j=state.stored_energy(config),
        period_means=period_means,
        ledger=ledger,
        settled=settled,
    )
    logger.info(
        "simulation_finished",
        settled=settled,
        delivered_j=result.energy_delivered_j,
        losses=result.loss.to_dict(),
        energy_residual_j=result.energy_residual_j,
    )
    if not settled:
        logger.warning("simulation_not_settled", last_means=period_means[-1].round(4).tolist())
    return result


def steady_state_profile(result: SimResult, k_periods: int = 10) -> List[float]:
    """
    Per-module mean voltage over the last ``k_periods`` fundamental periods.

    Raises:
        NotSettledError: If the run did not settle.
    """
    if not result.settled:
        raise NotSettledError(
            f"simulation did not settle within {result.n_periods} periods "
            f"(settle_tol={result.options.settle_tol})"
        )
    k = max(1, min(k_periods, result.n_periods))
    return result.period_means[-k:].mean(axis=0).tolist()
