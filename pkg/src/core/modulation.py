# src/core/modulation.py

"""
Phase-shifted-carrier modulation for a DiSeP string and the mapping of
module levels onto link connection modes.

Each module compares |reference| with |c_k|, where c_k is a symmetric
triangular carrier in [-1, 1] shifted by k*pi/n. The levels sum to
n*reference within one level at every instant.

A module's level owns the mode of its upstream link (module k owns link
k-1); module 0 owns the output terminal half-link, which has no neighbour
to parallel with and therefore bypasses on a zero level. Zero levels on
the other links become parallel modes whose polarity alternates on every
rising edge of a separator signal.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.models import ConnectionMode, ConverterConfig
from src.utils.exceptions import DomainError
from src.utils.logging import get_logger

logger = get_logger(__name__)


class Polarity(str, enum.Enum):
    MINUS_NEXT = "MinusNext"
    PLUS_NEXT = "PlusNext"

    def flipped(self) -> "Polarity":
        return Polarity.PLUS_NEXT if self is Polarity.MINUS_NEXT else Polarity.MINUS_NEXT


class LatchScope(str, enum.Enum):
    """``link``: one latch per module fed by its own |level|; ``string``: one latch fed by |sum of levels|."""

    LINK = "link"
    STRING = "string"


@dataclass(frozen=True)
class ModulatorConfig:
    """
    Phase-shifted-carrier modulator settings.

    Attributes:
        n_modules (int): Number of modules (one carrier each).
        f_carrier (float): Carrier frequency in hertz.
        f_out (float): Reference frequency in hertz.
        modulation_index (float): Reference amplitude in [0, 1].
        carrier_phases (Tuple[float, ...]): Carrier phase offsets in radians,
            defaulting to k*pi/n for module k.
    """

    n_modules: int
    f_carrier: float
    f_out: float
    modulation_index: float
    carrier_phases: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if self.n_modules < 1:
            raise DomainError(f"n_modules must be >= 1, got {self.n_modules}")
        if not self.f_carrier > self.f_out > 0:
            raise DomainError(f"need f_carrier > f_out > 0, got {self.f_carrier}, {self.f_out}")
        if not 0.0 <= self.modulation_index <= 1.0:
            raise DomainError(f"modulation_index must be in [0, 1], got {self.modulation_index}")
        phases = self.carrier_phases
        if phases is None:
            phases = tuple(k * math.pi / self.n_modules for k in range(self.n_modules))
        phases = tuple(float(p) for p in phases)
        if len(phases) != self.n_modules:
            raise DomainError(f"expected {self.n_modules} carrier phases, got {len(phases)}")
        wrapped = {round(p % (2.0 * math.pi), 12) for p in phases}
        if len(wrapped) != len(phases):
            raise DomainError("carrier phases must be distinct modulo the carrier period")
        object.__setattr__(self, "carrier_phases", phases)

    @classmethod
    def from_converter(cls, config: ConverterConfig) -> "ModulatorConfig":
        return cls(
            n_modules=config.n_modules,
            f_carrier=config.f_carrier,
            f_out=config.f_out,
            modulation_index=config.modulation_index,
        )

    @property
    def phase_fractions(self) -> np.ndarray:
        return np.asarray(self.carrier_phases, dtype=float) / (2.0 * math.pi)


@dataclass(frozen=True)
class LatchState:
    """
    Parallel-polarity latch.

    ``polarity`` and ``prev_sep`` hold one entry per module. With string
    scope all entries move together.
    """

    polarity: Tuple[Polarity, ...]
    prev_sep: Tuple[int, ...]
    scope: LatchScope = LatchScope.STRING

    @classmethod
    def initial(cls, n_modules: int, scope: LatchScope = LatchScope.STRING) -> "LatchState":
        return cls(
            polarity=(Polarity.MINUS_NEXT,) * n_modules,
            prev_sep=(0,) * n_modules,
            scope=LatchScope(scope),
        )


@dataclass(frozen=True)
class ModeCommand:
    """
    Connection modes for one sample.

    Attributes:
        t (float): Sample time in seconds.
        link_modes (Tuple[ConnectionMode, ...]): Mode of link k (between modules k and k+1).
        module_levels (Tuple[int, ...]): Level of every module in {-1, 0, +1}.
        terminal_mode (ConnectionMode): Mode of the output half-link owned by module 0.
    """

    t: float
    link_modes: Tuple[ConnectionMode, ...]
    module_levels: Tuple[int, ...]
    terminal_mode: ConnectionMode

    def __post_init__(self) -> None:
        if len(self.link_modes) != len(self.module_levels) - 1:
            raise DomainError("link_modes must have one entry less than module_levels")

    @property
    def slot_modes(self) -> Tuple[ConnectionMode, ...]:
        """Mode owned by each module: the terminal mode followed by the link modes."""
        return (self.terminal_mode,) + self.link_modes


def reference(cfg: ModulatorConfig, t: float) -> float:
    """m * sin(2*pi*f_out*t)."""
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    return cfg.modulation_index * math.sin(2.0 * math.pi * cfg.f_out * t)


def carriers(cfg: ModulatorConfig, times: np.ndarray) -> np.ndarray:
    """Triangular carriers in [-1, 1], shape (len(times), n_modules)."""
    p = (np.asarray(times, dtype=float)[:, None] * cfg.f_carrier + cfg.phase_fractions[None, :]) % 1.0
    return 4.0 * np.abs(p - 0.5) - 1.0


def psc_level_grid(cfg: ModulatorConfig, times: Sequence[float]) -> np.ndarray:
    """
    Module levels on a time grid.

    Returns:
        np.ndarray: int8 array of shape (len(times), n_modules) with entries in {-1, 0, +1}.
    """
    t = np.asarray(times, dtype=float)
    ref = cfg.modulation_index * np.sin(2.0 * np.pi * cfg.f_out * t)
    on = np.abs(ref)[:, None] >= np.abs(carriers(cfg, t))
    return (np.sign(ref)[:, None] * on).astype(np.int8)


def psc_levels(cfg: ModulatorConfig, t: float) -> Tuple[int, ...]:
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    return tuple(int(v) for v in psc_level_grid(cfg, [t])[0])


def _mode_for(level: int, polarity: Polarity, terminal: bool) -> ConnectionMode:
    if level > 0:
        return ConnectionMode.SERIES_PLUS
    if level < 0:
        return ConnectionMode.SERIES_MINUS
    if terminal:
        return ConnectionMode.BYPASS_MINUS if polarity is Polarity.MINUS_NEXT else ConnectionMode.BYPASS_PLUS
    return ConnectionMode.PARALLEL_MINUS if polarity is Polarity.MINUS_NEXT else ConnectionMode.PARALLEL_PLUS


def map_levels_to_modes(
    levels: Sequence[int],
    latch: LatchState,
    t: float = 0.0,
) -> Tuple[ModeCommand, LatchState]:
    """
    Maps module levels to link modes and advances the polarity latch.

    +1 maps to SeriesPlus, -1 to SeriesMinus and 0 to ParallelMinus or
    ParallelPlus by latch polarity (Bypass on the terminal half-link). The
    latch flips on a rising edge (0 to nonzero) of its separator; the
    flipped polarity applies from this sample on. Degradation of a
    non-engaged parallel link to bypass is left to the simulator.
    """
    levels = tuple(int(v) for v in levels)
    n = len(levels)
    if n != len(latch.polarity):
        raise DomainError(f"latch holds {len(latch.polarity)} entries, got {n} levels")

    if latch.scope is LatchScope.STRING:
        seps = (abs(sum(levels)),) * n
    else:
        seps = tuple(abs(v) for v in levels)

    polarity = tuple(
        pol.flipped() if prev == 0 and sep != 0 else pol
        for pol, prev, sep in zip(latch.polarity, latch.prev_sep, seps)
    )
    modes = tuple(_mode_for(level, pol, k == 0) for k, (level, pol) in enumerate(zip(levels, polarity)))
    command = ModeCommand(t=t, link_modes=modes[1:], module_levels=levels, terminal_mode=modes[0])
    return command, LatchState(polarity=polarity, prev_sep=seps, scope=latch.scope)


def mode_stream(
    cfg: ModulatorConfig,
    times: Iterable[float],
    latch: Optional[LatchState] = None,
    scope: LatchScope = LatchScope.STRING,
) -> List[ModeCommand]:
    """Deterministic command stream for a time grid."""
    t = np.asarray(list(times), dtype=float)
    state = latch or LatchState.initial(cfg.n_modules, scope)
    grid = psc_level_grid(cfg, t)
    commands: List[ModeCommand] = []
    for t_k, row in zip(t.tolist(), grid.tolist()):
        command, state = map_levels_to_modes(row, state, t_k)
        commands.append(command)
    logger.debug("mode_stream", samples=len(commands), scope=state.scope.value)
    return commands


def commands_to_frame(commands: Sequence[ModeCommand]) -> pd.DataFrame:
    """CSV-ready frame: t_s, level_k per module, mode_terminal and mode_link_k per link."""
    if not commands:
        return pd.DataFrame(columns=["t_s"])
    n = len(commands[0].module_levels)
    data = {"t_s": [c.t for c in commands]}
    for k in range(n):
        data[f"level_{k}"] = [c.module_levels[k] for c in commands]
    data["mode_terminal"] = [c.terminal_mode.value for c in commands]
    for k in range(n - 1):
        data[f"mode_link_{k}"] = [c.link_modes[k].value for c in commands]
    return pd.DataFrame(data)
