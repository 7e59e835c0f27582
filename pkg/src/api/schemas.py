# src/api/schemas.py

"""
Pydantic models of the scenario document and their conversion into the
core value records.
"""

import copy
import math
from typing import Any, Dict, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.core.converter_sim import SimOptions
from src.core.models import (
    DEFAULT_DEVICE_PATHS,
    ConductionPath,
    ConnectionMode,
    ConverterConfig,
    DeviceKind,
    DeviceParams,
    DevicePathTable,
    LinkParams,
    ModuleParams,
    SupplyMode,
)
from src.core.modulation import LatchScope, ModulatorConfig
from src.core.parallel_dynamics import LoopParams
from src.pipeline.data_validation import SCHEMA_VERSION, dotted_path, locate_line, parse_scenario_text
from src.utils.exceptions import DomainError, ScenarioValidationError

NumberOrList = Union[float, List[float]]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DevicesModel(_Model):
    r_ds_on: float = Field(..., gt=0, description="Transistor on-resistance (ohm)")
    v_d: float = Field(..., ge=0, description="Diode forward drop (V)")
    kind: DeviceKind = Field(DeviceKind.FET, description="fet or igbt")
    v_ce_sat: float = Field(0.0, ge=0, description="Extra IGBT junction drop (V)")

    def to_params(self) -> DeviceParams:
        return DeviceParams(r_ds_on=self.r_ds_on, v_d=self.v_d, kind=self.kind, v_ce_sat=self.v_ce_sat)


class LinkModel(_Model):
    r_loop: float = Field(..., gt=0, description="Loop resistance (ohm)")
    l_loop: float = Field(..., gt=0, description="Loop inductance (H)")
    n_loop_diodes: int = Field(2, ge=0, description="Junctions lumped into the loop drop")
    v_d_loop: Optional[float] = Field(None, ge=0, description="Explicit loop drop (V); derived when omitted")

    def to_params(self, devices: DeviceParams) -> LinkParams:
        if self.v_d_loop is None:
            return LinkParams.from_devices(devices, self.r_loop, self.l_loop, self.n_loop_diodes)
        return LinkParams(self.r_loop, self.l_loop, self.v_d_loop, self.n_loop_diodes)


class SupplyModel(_Model):
    index: int = Field(..., ge=0)
    voltage: float = Field(..., ge=0)
    mode: SupplyMode = SupplyMode.CLAMP
    r_src: Optional[float] = Field(None, gt=0)


class DevicePathModel(_Model):
    mode: ConnectionMode
    favorable: bool
    kind: Literal["envelope", "devices"]
    n_transistors: int = Field(0, ge=0)
    n_diodes: int = Field(0, ge=0)

    def to_path(self) -> ConductionPath:
        if self.kind == "envelope":
            return ConductionPath.envelope()
        return ConductionPath.devices(self.n_transistors, self.n_diodes)


def _expand(value: NumberOrList, n: int, name: str) -> List[float]:
    if isinstance(value, list):
        if len(value) != n:
            raise ValueError(f"{name} lists {len(value)} entries for {n} modules")
        return [float(v) for v in value]
    return [float(value)] * n


class ConverterModel(_Model):
    n_modules: int = Field(..., ge=2)
    capacitance: NumberOrList
    v_init: NumberOrList
    devices: DevicesModel
    link: Optional[LinkModel] = None
    links: Optional[List[LinkModel]] = None
    supply: SupplyModel
    r_load: Optional[float] = Field(None, gt=0, description="Load resistance (ohm); null for open circuit")
    f_out: float = Field(..., gt=0)
    modulation_index: float = Field(..., ge=0, le=1)
    f_carrier: float = Field(..., gt=0)
    device_paths: Optional[List[DevicePathModel]] = None

    @model_validator(mode="after")
    def check_shape(self) -> "ConverterModel":
        _expand(self.capacitance, self.n_modules, "capacitance")
        _expand(self.v_init, self.n_modules, "v_init")
        if (self.link is None) == (self.links is None):
            raise ValueError("give exactly one of 'link' or 'links'")
        if self.links is not None and len(self.links) != self.n_modules - 1:
            raise ValueError(f"links lists {len(self.links)} entries for {self.n_modules - 1} links")
        if self.supply.index >= self.n_modules:
            raise ValueError(f"supply.index {self.supply.index} outside [0, {self.n_modules})")
        if self.f_carrier <= self.f_out:
            raise ValueError("f_carrier must exceed f_out")
        return self

    def to_config(self) -> ConverterConfig:
        devices = self.devices.to_params()
        caps = _expand(self.capacitance, self.n_modules, "capacitance")
        v_init = _expand(self.v_init, self.n_modules, "v_init")
        modules = tuple(ModuleParams(capacitance=c, v_init=v, devices=devices) for c, v in zip(caps, v_init))
        link_models = self.links if self.links is not None else [self.link] * (self.n_modules - 1)
        links = tuple(link.to_params(devices) for link in link_models if link is not None)
        return ConverterConfig(
            n_modules=self.n_modules,
            modules=modules,
            links=links,
            supply_index=self.supply.index,
            v_supply=self.supply.voltage,
            r_load=math.inf if self.r_load is None else self.r_load,
            f_out=self.f_out,
            modulation_index=self.modulation_index,
            f_carrier=self.f_carrier,
            supply_mode=self.supply.mode,
            r_src=self.supply.r_src,
        )

    def path_table(self) -> DevicePathTable:
        if not self.device_paths:
            return DEFAULT_DEVICE_PATHS
        return DEFAULT_DEVICE_PATHS.with_overrides({(p.mode, p.favorable): p.to_path() for p in self.device_paths})


class ModulatorModel(_Model):
    carrier_phases: Optional[List[float]] = None
    latch_scope: LatchScope = LatchScope.STRING


class SimulationModel(_Model):
    periods: int = Field(30, ge=1)
    oversample: Optional[int] = Field(None, ge=20)
    load_coupled: bool = True
    e_sw: float = Field(2e-6, ge=0)
    transitions_per_change: int = Field(2, ge=0)
    sample_every: int = Field(1, ge=1)
    settle_tol: float = Field(1e-3, gt=0)
    steady_periods: int = Field(10, ge=1)
    max_voltage: Optional[float] = Field(None, gt=0)
    substeps_per_tchar: int = Field(20, ge=1, description="Loop sub-steps per characteristic loop time")


class LoopModel(_Model):
    c: float = Field(..., gt=0)
    r: float = Field(..., gt=0)
    v_d: float = Field(..., ge=0)
    delta_v0: float = Field(..., gt=0)
    v2_0: float = Field(0.0, ge=0)

    def params(self, l_loop: float) -> LoopParams:
        return LoopParams(c=self.c, r=self.r, l=l_loop, v_d=self.v_d)


class CalibrationPoint(_Model):
    f_carrier: float = Field(..., gt=0)
    efficiency: float = Field(..., gt=0, le=1)


class SweepModel(_Model):
    kind: Literal["inductance", "distance", "switching_rate", "parameter"]
    parameter: Optional[str] = None
    values: Optional[List[float]] = None
    start: Optional[float] = None
    stop: Optional[float] = None
    points: Optional[int] = Field(None, ge=1)
    scale: Literal["linear", "log"] = "linear"
    oracle: bool = False
    loop: Optional[LoopModel] = None
    calibration: Optional[List[CalibrationPoint]] = None

    @model_validator(mode="after")
    def check_grid(self) -> "SweepModel":
        ranged = (self.start, self.stop, self.points)
        if self.values is None and any(v is None for v in ranged):
            raise ValueError("a sweep needs 'values' or 'start', 'stop' and 'points'")
        if self.values is not None and any(v is not None for v in ranged):
            raise ValueError("give either 'values' or a start/stop/points range, not both")
        if self.scale == "log" and self.values is None and (self.start <= 0 or self.stop <= 0):
            raise ValueError("log sweeps need positive bounds")
        if self.kind == "inductance" and self.loop is None:
            raise ValueError("inductance sweeps need a 'loop' block")
        if self.kind == "parameter" and not self.parameter:
            raise ValueError("parameter sweeps need a dotted 'parameter' path")
        grid = self.grid()
        if grid.size == 0:
            raise ValueError("sweep grid is empty")
        steps = np.diff(grid)
        if grid.size > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("sweep grid must be strictly monotone")
        return self

    def grid(self) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        if self.scale == "log":
            return np.logspace(math.log10(self.start), math.log10(self.stop), self.points)
        return np.linspace(self.start, self.stop, self.points)


class ScenarioModel(_Model):
    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = Field(..., min_length=1)
    converter: Optional[ConverterModel] = None
    modulator: ModulatorModel = ModulatorModel()
    simulation: SimulationModel = SimulationModel()
    sweep: Optional[SweepModel] = None
    outputs: List[Literal["waveforms", "profile", "spectrum", "losses", "modes", "periods"]] = Field(
        default_factory=lambda: ["waveforms", "profile", "spectrum", "losses"]
    )

    @model_validator(mode="after")
    def check_converter(self) -> "ScenarioModel":
        needs_converter = self.sweep is None or self.sweep.kind != "inductance"
        if needs_converter and self.converter is None:
            raise ValueError("'converter' is required unless the scenario is an inductance sweep")
        return self

    @field_validator("outputs")
    @classmethod
    def unique_outputs(cls, value: List[str]) -> List[str]:
        if len(set(value)) != len(value):
            raise ValueError("outputs must be unique")
        return value

    def converter_config(self) -> ConverterConfig:
        if self.converter is None:
            raise DomainError(f"scenario {self.name!r} has no converter")
        return self.converter.to_config()

    def modulator_config(self) -> ModulatorConfig:
        config = self.converter_config()
        phases = tuple(self.modulator.carrier_phases) if self.modulator.carrier_phases else None
        return ModulatorConfig(
            n_modules=config.n_modules,
            f_carrier=config.f_carrier,
            f_out=config.f_out,
            modulation_index=config.modulation_index,
            carrier_phases=phases,
        )

    def sim_options(self, oversample: Optional[int] = None, default_oversample: int = 50) -> SimOptions:
        """CLI override first, then the scenario value, then the settings default."""
        sim = self.simulation
        chosen = oversample or sim.oversample or default_oversample
        assert self.converter is not None
        return SimOptions(
            oversample=chosen,
            load_coupled=sim.load_coupled,
            e_sw=sim.e_sw,
            transitions_per_change=sim.transitions_per_change,
            sample_every=sim.sample_every,
            settle_tol=sim.settle_tol,
            max_voltage=sim.max_voltage,
            device_paths=self.converter.path_table(),
            latch_scope=self.modulator.latch_scope,
            substeps_per_tchar=sim.substeps_per_tchar,
        )

    @property
    def horizon(self) -> float:
        return self.simulation.periods / self.converter_config().f_out


def _from_pydantic(exc: ValidationError, text: str) -> ScenarioValidationError:
    first = exc.errors()[0]
    loc = [part for part in first["loc"] if not (isinstance(part, str) and part.startswith("function-"))]
    return ScenarioValidationError(first["msg"], field=dotted_path(loc), line=locate_line(text, loc))


def build_scenario(document: Dict[str, Any], text: str = "") -> ScenarioModel:
    """
    Builds the scenario model and checks that it converts to valid core records.

    Raises:
        ScenarioValidationError: With the offending field path and line.
    """
    try:
        scenario = ScenarioModel.model_validate(document)
    except ValidationError as exc:
        raise _from_pydantic(exc, text) from exc
    if scenario.converter is not None:
        try:
            scenario.converter_config()
            scenario.modulator_config()
        except DomainError as exc:
            raise ScenarioValidationError(exc.message, field="converter", line=locate_line(text, ["converter"]))
    return scenario


def scenario_from_text(text: str) -> ScenarioModel:
    return build_scenario(parse_scenario_text(text), text)


def set_dotted(document: Dict[str, Any], path: str, value: Any) -> Dict[str, Any]:
    """Returns a copy of ``document`` with ``path`` (e.g. "converter.link.l_loop") replaced."""
    updated = copy.deepcopy(document)
    node: Any = updated
    parts = path.split(".")
    for part in parts[:-1]:
        if isinstance(node, list):
            node = node[int(part)]
        elif isinstance(node, dict) and part in node:
            node = node[part]
        else:
            raise ScenarioValidationError(f"unknown path segment {part!r}", field=path)
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise ScenarioValidationError("path does not end in an object or array", field=path)
    return updated


def scenario_variants(document: Dict[str, Any], path: str, values: Sequence[float]) -> List[ScenarioModel]:
    """One validated scenario per swept value, without the sweep block."""
    base = {k: v for k, v in document.items() if k != "sweep"}
    return [build_scenario(set_dotted(base, path, value)) for value in values]
