# src/core/models.py

"""
Value records describing a DiSeP converter string.

All records are frozen dataclasses: immutable, hashable and safe to share
between threads. Invariants are checked on construction and reported as
DomainError so that both library callers and the scenario loader see the
same messages.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple, Union

from src.utils.exceptions import DomainError


class ConnectionMode(str, enum.Enum):
    """The six inter-module connection states of a DiSeP link."""

    SERIES_MINUS = "SeriesMinus"
    SERIES_PLUS = "SeriesPlus"
    PARALLEL_MINUS = "ParallelMinus"
    PARALLEL_PLUS = "ParallelPlus"
    BYPASS_MINUS = "BypassMinus"
    BYPASS_PLUS = "BypassPlus"

    @property
    def is_series(self) -> bool:
        return self in (ConnectionMode.SERIES_MINUS, ConnectionMode.SERIES_PLUS)

    @property
    def is_parallel(self) -> bool:
        return self in (ConnectionMode.PARALLEL_MINUS, ConnectionMode.PARALLEL_PLUS)

    @property
    def is_bypass(self) -> bool:
        return self in (ConnectionMode.BYPASS_MINUS, ConnectionMode.BYPASS_PLUS)


class DeviceKind(str, enum.Enum):
    """Unipolar switches add one junction per path, bipolar switches add a second one."""

    FET = "fet"
    IGBT = "igbt"


@dataclass(frozen=True)
class DeviceParams:
    """
    Ideal device model of one transistor/diode pair.

    Attributes:
        r_ds_on (float): Transistor on-resistance in ohms.
        v_d (float): Diode forward drop in volts.
        kind (DeviceKind): FET or IGBT.
        v_ce_sat (float): Extra junction drop of a bipolar transistor in volts.
    """

    r_ds_on: float
    v_d: float
    kind: DeviceKind = DeviceKind.FET
    v_ce_sat: float = 0.0

    def __post_init__(self) -> None:
        if not self.r_ds_on > 0:
            raise DomainError(f"r_ds_on must be > 0, got {self.r_ds_on}")
        if self.v_d < 0:
            raise DomainError(f"v_d must be >= 0, got {self.v_d}")
        if self.v_ce_sat < 0:
            raise DomainError(f"v_ce_sat must be >= 0, got {self.v_ce_sat}")

    @property
    def transistor_offset(self) -> float:
        """Constant on-state drop of one conducting transistor (0 for FETs)."""
        return self.v_ce_sat if self.kind is DeviceKind.IGBT else 0.0


@dataclass(frozen=True)
class ModuleParams:
    """
    One module: a capacitor plus its four transistors and four diodes.

    Attributes:
        capacitance (float): Module capacitance in farads.
        v_init (float): Initial capacitor voltage in volts.
        devices (DeviceParams): Semiconductor parameters.
    """

    capacitance: float
    v_init: float
    devices: DeviceParams

    def __post_init__(self) -> None:
        if not self.capacitance > 0:
            raise DomainError(f"capacitance must be > 0, got {self.capacitance}")
        if self.v_init < 0:
            raise DomainError(f"v_init must be >= 0, got {self.v_init}")


@dataclass(frozen=True)
class LinkParams:
    """
    Lumped parallelization loop between two adjacent modules.

    Attributes:
        r_loop (float): Loop resistance in ohms.
        l_loop (float): Loop inductance in henries.
        v_d_loop (float): Lumped loop diode drop in volts.
        n_loop_diodes (int): Junction count the lumped drop stands for.
    """

    r_loop: float
    l_loop: float
    v_d_loop: float
    n_loop_diodes: int = 2

    def __post_init__(self) -> None:
        if not self.r_loop > 0:
            raise DomainError(f"r_loop must be > 0, got {self.r_loop}")
        if not self.l_loop > 0:
            raise DomainError(f"l_loop must be > 0, got {self.l_loop}")
        if self.v_d_loop < 0:
            raise DomainError(f"v_d_loop must be >= 0, got {self.v_d_loop}")
        if self.n_loop_diodes < 0:
            raise DomainError(f"n_loop_diodes must be >= 0, got {self.n_loop_diodes}")

    @classmethod
    def from_devices(
        cls,
        devices: DeviceParams,
        r_loop: float,
        l_loop: float,
        n_loop_diodes: int = 2,
    ) -> "LinkParams":
        """Builds a link whose lumped drop is ``n_loop_diodes`` device junctions."""
        return cls(
            r_loop=r_loop,
            l_loop=l_loop,
            v_d_loop=n_loop_diodes * devices.v_d,
            n_loop_diodes=n_loop_diodes,
        )


class PathKind(str, enum.Enum):
    ENVELOPE = "envelope"
    DEVICES = "devices"


@dataclass(frozen=True)
class ConductionPath:
    """
    Device content of a conduction path.

    ENVELOPE is the two-paralleled-branch path with impedance
    min(r_ds_on, v_d / i); DEVICES is a plain series chain.
    """

    kind: PathKind
    n_transistors: int = 0
    n_diodes: int = 0

    @classmethod
    def envelope(cls) -> "ConductionPath":
        return cls(PathKind.ENVELOPE)

    @classmethod
    def devices(cls, n_transistors: int, n_diodes: int) -> "ConductionPath":
        if n_transistors < 0 or n_diodes < 0:
            raise DomainError("device counts must be non-negative")
        return cls(PathKind.DEVICES, n_transistors, n_diodes)


PathKey = Tuple[ConnectionMode, bool]


def _default_paths() -> Dict[PathKey, ConductionPath]:
    one_pair = ConductionPath.devices(1, 1)
    table: Dict[PathKey, ConductionPath] = {}
    for mode in ConnectionMode:
        for favorable in (True, False):
            table[(mode, favorable)] = one_pair
    table[(ConnectionMode.SERIES_MINUS, True)] = ConductionPath.envelope()
    table[(ConnectionMode.SERIES_PLUS, True)] = ConductionPath.envelope()
    return table


@dataclass(frozen=True)
class DevicePathTable:
    """
    Per-(mode, favorable direction) conduction path matrix.

    Defaults: favorable series direction uses the envelope path, every other
    entry one transistor plus one diode. Entries can be overridden from
    scenario data without code changes.
    """

    paths: Mapping[PathKey, ConductionPath] = field(default_factory=_default_paths)

    def lookup(self, mode: ConnectionMode, favorable: bool) -> ConductionPath:
        # Non-series modes have no preferred direction.
        if not mode.is_series:
            favorable = True
        return self.paths[(mode, favorable)]

    def with_overrides(self, overrides: Mapping[PathKey, ConductionPath]) -> "DevicePathTable":
        merged = dict(self.paths)
        merged.update(overrides)
        return DevicePathTable(merged)

    def __hash__(self) -> int:
        return hash(tuple(sorted((k[0].value, k[1], v) for k, v in self.paths.items())))


DEFAULT_DEVICE_PATHS = DevicePathTable()


class SupplyMode(str, enum.Enum):
    CLAMP = "clamp"
    RESISTIVE = "resistive"
    NONE = "none"


@dataclass(frozen=True)
class ConverterConfig:
    """
    Description of an N-module DiSeP string.

    Attributes:
        n_modules (int): Module count (>= 2).
        modules (Tuple[ModuleParams, ...]): Per-module parameters.
        links (Tuple[LinkParams, ...]): Per-link loops, length n_modules - 1.
        supply_index (int): Module fed by the dc source.
        v_supply (float): Source voltage in volts.
        r_load (float): Resistive load in ohms (math.inf for open circuit).
        f_out (float): Output frequency in hertz.
        modulation_index (float): Per-unit reference amplitude.
        f_carrier (float): Carrier frequency in hertz.
        supply_mode (SupplyMode): Ideal clamp, series resistance or none.
        r_src (Optional[float]): Source resistance for the resistive supply mode.
    """

    n_modules: int
    modules: Tuple[ModuleParams, ...]
    links: Tuple[LinkParams, ...]
    supply_index: int
    v_supply: float
    r_load: float
    f_out: float
    modulation_index: float
    f_carrier: float
    supply_mode: SupplyMode = SupplyMode.CLAMP
    r_src: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "modules", tuple(self.modules))
        object.__setattr__(self, "links", tuple(self.links))
        if self.n_modules < 2:
            raise DomainError(f"n_modules must be >= 2, got {self.n_modules}")
        if len(self.modules) != self.n_modules:
            raise DomainError(f"expected {self.n_modules} modules, got {len(self.modules)}")
        if len(self.links) != self.n_modules - 1:
            raise DomainError(f"expected {self.n_modules - 1} links, got {len(self.links)}")
        if not 0 <= self.supply_index < self.n_modules:
            raise DomainError(f"supply_index {self.supply_index} outside [0, {self.n_modules})")
        if self.v_supply < 0:
            raise DomainError(f"v_supply must be >= 0, got {self.v_supply}")
        if not self.r_load > 0:
            raise DomainError(f"r_load must be > 0, got {self.r_load}")
        if not self.f_out > 0:
            raise DomainError(f"f_out must be > 0, got {self.f_out}")
        if not self.f_carrier > self.f_out:
            raise DomainError(f"f_carrier ({self.f_carrier}) must exceed f_out ({self.f_out})")
        if not 0.0 <= self.modulation_index <= 1.0:
            raise DomainError(f"modulation_index must be in [0, 1], got {self.modulation_index}")
        if self.supply_mode is SupplyMode.RESISTIVE and not (self.r_src is not None and self.r_src > 0):
            raise DomainError("resistive supply mode needs r_src > 0")

    @classmethod
    def uniform(
        cls,
        n_modules: int,
        module: ModuleParams,
        link: LinkParams,
        **kwargs: Union[int, float, SupplyMode, None],
    ) -> "ConverterConfig":
        """Builds a string of identical modules and links."""
        return cls(
            n_modules=n_modules,
            modules=tuple([module] * n_modules),
            links=tuple([link] * (n_modules - 1)),
            **kwargs,  # type: ignore[arg-type]
        )
