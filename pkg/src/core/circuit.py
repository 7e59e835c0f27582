# src/core/circuit.py

"""
Per-mode electrical behaviour of a DiSeP link: output-voltage contribution,
the paralleled-branch impedance envelope, and conduction drops.

Direction convention: a positive string current flows upstream, from module
n to module n-1. SeriesPlus is the favorable series direction for positive
current and SeriesMinus for negative current.
"""

from typing import Sequence, Tuple

from src.core.models import (
    DEFAULT_DEVICE_PATHS,
    ConductionPath,
    ConnectionMode,
    DeviceParams,
    DevicePathTable,
    PathKind,
)
from src.utils.exceptions import DomainError


def output_contribution(mode: ConnectionMode, v_cap: float) -> float:
    """
    Voltage a module inserts into the string in the given mode.

    Args:
        mode (ConnectionMode): Mode of the link slot owned by the module.
        v_cap (float): Capacitor voltage (>= 0).

    Returns:
        float: +v_cap for SeriesPlus, -v_cap for SeriesMinus, 0 otherwise.
    """
    if v_cap < 0:
        raise DomainError(f"v_cap must be >= 0, got {v_cap}")
    if mode is ConnectionMode.SERIES_PLUS:
        return v_cap
    if mode is ConnectionMode.SERIES_MINUS:
        return -v_cap
    return 0.0


def series_path_impedance(devices: DeviceParams, i: float) -> float:
    """
    Impedance of the two paralleled series branches in their favorable direction.

    The lower envelope of a resistive branch (r_ds_on) and a diode branch
    (v_d / i); the branches cross over at i = v_d / r_ds_on.

    Raises:
        DomainError: If ``i`` is not positive.
    """
    if not i > 0:
        raise DomainError(f"envelope impedance needs a positive current, got {i}")
    return min(devices.r_ds_on, devices.v_d / i)


def favorable_direction(mode: ConnectionMode, direction: int) -> bool:
    """True when ``direction`` (sign of the string current) is the mode's preferred one."""
    if mode is ConnectionMode.SERIES_PLUS:
        return direction > 0
    if mode is ConnectionMode.SERIES_MINUS:
        return direction < 0
    return True


def path_drop(path: ConductionPath, i_abs: float, devices: DeviceParams) -> float:
    """Voltage across a conduction path carrying ``i_abs`` (>= 0) amperes."""
    if i_abs <= 0:
        return 0.0
    if path.kind is PathKind.ENVELOPE:
        return series_path_impedance(devices, i_abs) * i_abs
    return (
        path.n_transistors * (devices.r_ds_on * i_abs + devices.transistor_offset)
        + path.n_diodes * devices.v_d
    )


def conduction_drop(
    mode: ConnectionMode,
    direction: int,
    i: float,
    devices: DeviceParams,
    paths: DevicePathTable = DEFAULT_DEVICE_PATHS,
) -> float:
    """
    Conduction voltage drop of a link in a mode for a current of given sign.

    Args:
        mode (ConnectionMode): Link mode.
        direction (int): Sign of the string current (+1 upstream, -1 downstream).
        i (float): Current; only its magnitude enters the drop.
        devices (DeviceParams): Device parameters.
        paths (DevicePathTable): Device-count matrix.

    Returns:
        float: Non-negative drop in volts, 0 when no current flows.
    """
    path = paths.lookup(mode, favorable_direction(mode, direction))
    return path_drop(path, abs(i), devices)


def solve_string_current(
    v_source: float,
    r_load: float,
    slot_paths: Sequence[ConductionPath],
    slot_devices: Sequence[DeviceParams],
) -> Tuple[float, float]:
    """
    Solves r_load * i + sum(drops(i)) = |v_source| for the string current magnitude.

    Every drop is piecewise linear in i (an envelope path saturates at v_d
    above i = v_d / r_ds_on), so the solution is found by promoting saturated
    envelope paths until the linear solve is self-consistent.

    Returns:
        Tuple[float, float]: (current magnitude, total conduction drop).
    """
    magnitude = abs(v_source)
    if magnitude == 0.0 or r_load == float("inf"):
        return 0.0, 0.0

    offset = 0.0
    resistance = r_load
    envelopes = []
    for path, devices in zip(slot_paths, slot_devices):
        if path.kind is PathKind.ENVELOPE:
            envelopes.append(devices)
            resistance += devices.r_ds_on
        else:
            offset += path.n_transistors * devices.transistor_offset + path.n_diodes * devices.v_d
            resistance += path.n_transistors * devices.r_ds_on

    # Diodes block until the source exceeds the summed junction drops.
    if magnitude <= offset:
        return 0.0, 0.0

    saturated = [False] * len(envelopes)
    while True:
        current = (magnitude - offset) / resistance
        promoted = False
        for idx, devices in enumerate(envelopes):
            if not saturated[idx] and devices.r_ds_on * current > devices.v_d:
                saturated[idx] = True
                resistance -= devices.r_ds_on
                offset += devices.v_d
                promoted = True
        if not promoted:
            break
    return current, magnitude - r_load * current
