import math

import pytest

from src.core.models import (
    DEFAULT_DEVICE_PATHS,
    ConductionPath,
    ConnectionMode,
    ConverterConfig,
    DeviceParams,
    LinkParams,
    ModuleParams,
    PathKind,
    SupplyMode,
)
from src.utils.exceptions import DomainError

FET = DeviceParams(r_ds_on=0.008, v_d=1.2)
MODULE = ModuleParams(capacitance=0.015, v_init=35.0, devices=FET)
LINK = LinkParams.from_devices(FET, r_loop=0.02, l_loop=5e-7)

BASE = dict(supply_index=0, v_supply=35.0, r_load=200.0, f_out=60.0, modulation_index=0.95, f_carrier=10000.0)


@pytest.mark.parametrize("kwargs", [{"r_ds_on": 0.0, "v_d": 1.2}, {"r_ds_on": 0.01, "v_d": -0.1}])
def test_device_params_invariants(kwargs):
    with pytest.raises(DomainError):
        DeviceParams(**kwargs)


def test_link_from_devices_lumps_two_junctions():
    assert LINK.v_d_loop == pytest.approx(2.4)
    assert LINK.n_loop_diodes == 2


def test_link_rejects_non_positive_inductance():
    with pytest.raises(DomainError):
        LinkParams(r_loop=0.02, l_loop=0.0, v_d_loop=2.4)


def test_uniform_config():
    config = ConverterConfig.uniform(6, MODULE, LINK, **BASE)
    assert len(config.modules) == 6
    assert len(config.links) == 5
    assert config.supply_mode is SupplyMode.CLAMP


@pytest.mark.parametrize(
    "override",
    [
        {"supply_index": 6},
        {"f_carrier": 60.0},
        {"modulation_index": 1.2},
        {"r_load": 0.0},
        {"supply_mode": SupplyMode.RESISTIVE},
    ],
)
def test_config_invariants(override):
    with pytest.raises(DomainError):
        ConverterConfig.uniform(6, MODULE, LINK, **{**BASE, **override})


def test_config_needs_two_modules():
    with pytest.raises(DomainError):
        ConverterConfig.uniform(1, MODULE, LINK, **BASE)


def test_open_circuit_load_is_allowed():
    config = ConverterConfig.uniform(2, MODULE, LINK, **{**BASE, "r_load": math.inf})
    assert math.isinf(config.r_load)


def test_default_path_table():
    fav = DEFAULT_DEVICE_PATHS.lookup(ConnectionMode.SERIES_PLUS, True)
    unfav = DEFAULT_DEVICE_PATHS.lookup(ConnectionMode.SERIES_PLUS, False)
    assert fav.kind is PathKind.ENVELOPE
    assert unfav == ConductionPath.devices(1, 1)
    # Non-series modes ignore the direction flag.
    assert DEFAULT_DEVICE_PATHS.lookup(ConnectionMode.PARALLEL_MINUS, False) == ConductionPath.devices(1, 1)


def test_path_table_overrides():
    table = DEFAULT_DEVICE_PATHS.with_overrides(
        {(ConnectionMode.SERIES_MINUS, False): ConductionPath.devices(2, 2)}
    )
    assert table.lookup(ConnectionMode.SERIES_MINUS, False) == ConductionPath.devices(2, 2)
    assert DEFAULT_DEVICE_PATHS.lookup(ConnectionMode.SERIES_MINUS, False) == ConductionPath.devices(1, 1)
    assert hash(table) != hash(DEFAULT_DEVICE_PATHS)
