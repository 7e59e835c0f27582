# tests/conftest.py

import json
import math
from pathlib import Path
from typing import Any, Callable, Dict

import pytest

from src.core.models import ConverterConfig, DeviceParams, LinkParams, ModuleParams, SupplyMode

# Prototype parts: 8 mOhm FETs, 1.2 V body diodes, 15 mF per module.
PROTOTYPE_DEVICES = DeviceParams(r_ds_on=0.008, v_d=1.2)
PROTOTYPE_C = 0.015


@pytest.fixture
def prototype_devices() -> DeviceParams:
    return PROTOTYPE_DEVICES


@pytest.fixture
def make_config() -> Callable[..., ConverterConfig]:
    """
    Factory for small uniform strings.

    Defaults describe a fast inductive loop (1 mF, 0.2 ohm, 10 uH) so that a
    50 us sub-step needs only a handful of loop sub-steps.
    """

    def _make(
        n_modules: int = 3,
        v_init: Any = 10.0,
        capacitance: float = 1e-3,
        r_loop: float = 0.2,
        l_loop: float = 1e-5,
        v_d_loop: float = 1.4,
        supply_index: int = 0,
        v_supply: float = 10.0,
        supply_mode: SupplyMode = SupplyMode.CLAMP,
        r_load: float = math.inf,
        f_out: float = 50.0,
        f_carrier: float = 1000.0,
        modulation_index: float = 0.9,
        devices: DeviceParams = DeviceParams(r_ds_on=0.008, v_d=0.7),
        r_src: Any = None,
    ) -> ConverterConfig:
        voltages = list(v_init) if isinstance(v_init, (list, tuple)) else [v_init] * n_modules
        return ConverterConfig(
            n_modules=n_modules,
            modules=tuple(ModuleParams(capacitance, v, devices) for v in voltages),
            links=tuple(LinkParams(r_loop, l_loop, v_d_loop) for _ in range(n_modules - 1)),
            supply_index=supply_index,
            v_supply=v_supply,
            r_load=r_load,
            f_out=f_out,
            modulation_index=modulation_index,
            f_carrier=f_carrier,
            supply_mode=supply_mode,
            r_src=r_src,
        )

    return _make


@pytest.fixture
def tiny_document() -> Dict[str, Any]:
    """Three-module open-circuit scenario at rest: nothing moves, so it settles at once."""
    return {
        "schema_version": 1,
        "name": "tiny",
        "converter": {
            "n_modules": 3,
            "capacitance": 0.001,
            "v_init": 10.0,
            "devices": {"r_ds_on": 0.008, "v_d": 0.7},
            "link": {"r_loop": 0.2, "l_loop": 1e-5},
            "supply": {"index": 0, "voltage": 10.0},
            "r_load": None,
            "f_out": 50.0,
            "modulation_index": 0.9,
            "f_carrier": 1000.0,
        },
        "simulation": {"periods": 3, "oversample": 20, "e_sw": 0.0, "steady_periods": 2},
        "outputs": ["waveforms", "profile", "spectrum", "losses", "modes", "periods"],
    }


@pytest.fixture
def write_scenario(tmp_path: Path) -> Callable[[Dict[str, Any]], Path]:
    def _write(document: Dict[str, Any], name: str = "scenario.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(document, indent=2), encoding="utf-8")
        return path

    return _write
