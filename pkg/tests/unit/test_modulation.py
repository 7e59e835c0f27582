import math

import numpy as np
import pytest

from src.core.models import ConnectionMode as M
from src.core.modulation import (
    LatchScope,
    LatchState,
    ModeCommand,
    ModulatorConfig,
    Polarity,
    carriers,
    commands_to_frame,
    map_levels_to_modes,
    mode_stream,
    psc_level_grid,
    psc_levels,
    reference,
)
from src.utils.exceptions import DomainError


@pytest.fixture
def six() -> ModulatorConfig:
    return ModulatorConfig(n_modules=6, f_carrier=10000.0, f_out=60.0, modulation_index=0.95)


def test_default_phases(six):
    assert six.carrier_phases == pytest.approx(tuple(k * math.pi / 6 for k in range(6)))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_modules": 2, "carrier_phases": (0.0, 2.0 * math.pi)},
        {"n_modules": 2, "carrier_phases": (0.0,)},
        {"n_modules": 0},
        {"n_modules": 2, "modulation_index": 1.5},
        {"n_modules": 2, "f_carrier": 10.0},
    ],
)
def test_config_invariants(kwargs):
    args = {"f_carrier": 1000.0, "f_out": 50.0, "modulation_index": 0.9, **kwargs}
    with pytest.raises(DomainError):
        ModulatorConfig(**args)


def test_reference(six):
    assert reference(six, 0.0) == 0.0
    assert reference(six, 1.0 / (4 * 60.0)) == pytest.approx(0.95)
    with pytest.raises(DomainError):
        reference(six, -1.0)


def test_carriers_stay_in_unit_band(six):
    c = carriers(six, np.linspace(0.0, 1e-3, 997))
    assert c.shape == (997, 6)
    assert c.min() >= -1.0 and c.max() <= 1.0


def test_levels_track_reference(six):
    times = np.linspace(0.0, 1.0 / 60.0, 5001)
    levels = psc_level_grid(six, times)
    assert set(np.unique(levels).tolist()) <= {-1, 0, 1}
    ref = 0.95 * np.sin(2.0 * np.pi * 60.0 * times)
    assert np.max(np.abs(levels.sum(axis=1) - 6 * ref)) <= 1.0 + 1e-9


def test_scalar_levels_match_grid(six):
    t = 1.234e-3
    assert psc_levels(six, t) == tuple(psc_level_grid(six, [t])[0].tolist())
    with pytest.raises(DomainError):
        psc_levels(six, -1.0)


def test_level_mapping_and_link_latch():
    latch = LatchState.initial(3, LatchScope.LINK)
    command, latch = map_levels_to_modes((1, -1, 0), latch)
    assert command.terminal_mode is M.SERIES_PLUS
    assert command.link_modes == (M.SERIES_MINUS, M.PARALLEL_MINUS)

    # Module 2 rises from 0: its latch flips and applies from this sample on.
    command, latch = map_levels_to_modes((1, -1, 1), latch)
    assert latch.polarity[2] is Polarity.PLUS_NEXT
    assert command.link_modes[1] is M.SERIES_PLUS

    command, latch = map_levels_to_modes((1, -1, 0), latch)
    assert command.link_modes[1] is M.PARALLEL_PLUS
    # Module 1 flipped once, on its first nonzero sample, and has not returned to zero since.
    assert latch.polarity[1] is Polarity.PLUS_NEXT


def test_terminal_zero_level_bypasses():
    command, _ = map_levels_to_modes((0, 0), LatchState.initial(2))
    assert command.terminal_mode is M.BYPASS_MINUS
    assert command.link_modes == (M.PARALLEL_MINUS,)
    assert command.slot_modes == (M.BYPASS_MINUS, M.PARALLEL_MINUS)


def test_string_scope_is_the_default():
    assert LatchState.initial(4).scope is LatchScope.STRING
    # Module 1 leaves zero but the string sum stays at zero: no flip.
    _, latch = map_levels_to_modes((1, -1, 0, 0), LatchState.initial(4))
    assert set(latch.polarity) == {Polarity.MINUS_NEXT}
    _, latch = map_levels_to_modes((1, 0, 0, 0), latch)
    assert set(latch.polarity) == {Polarity.PLUS_NEXT}


def test_string_scope_flips_every_module():
    latch = LatchState.initial(3, LatchScope.STRING)
    _, latch = map_levels_to_modes((0, 0, 0), latch)
    command, latch = map_levels_to_modes((1, 0, 0), latch)
    assert set(latch.polarity) == {Polarity.PLUS_NEXT}
    assert command.link_modes == (M.PARALLEL_PLUS, M.PARALLEL_PLUS)


def test_latch_size_must_match():
    with pytest.raises(DomainError):
        map_levels_to_modes((0, 1), LatchState.initial(3))


def test_command_shape_is_checked():
    with pytest.raises(DomainError):
        ModeCommand(t=0.0, link_modes=(M.PARALLEL_MINUS,), module_levels=(0, 0, 0), terminal_mode=M.BYPASS_MINUS)


def test_mode_stream_is_deterministic(six):
    times = np.arange(200) * 5e-6
    first = mode_stream(six, times)
    second = mode_stream(six, times)
    assert first == second
    frame = commands_to_frame(first)
    assert list(frame.columns[:7]) == ["t_s"] + [f"level_{k}" for k in range(6)]
    assert "mode_terminal" in frame.columns
    assert "mode_link_4" in frame.columns
    assert len(frame) == 200


def test_parallel_polarity_alternates_over_a_period(six):
    times = np.arange(4000) * (1.0 / 60.0 / 4000)
    used = {mode for command in mode_stream(six, times) for mode in command.link_modes if mode.is_parallel}
    assert used == {M.PARALLEL_MINUS, M.PARALLEL_PLUS}
