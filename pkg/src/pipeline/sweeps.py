# src/pipeline/sweeps.py

"""
Sweep harness.

Grid points run on a thread pool and are merged back in grid order, so a
sweep's table does not depend on completion order or worker count.

Sweep kinds:
    inductance      closed-form loop outcome over L, plus a CH2B reference row
    distance        simulated ladder deviation per hop for each supply voltage
    switching_rate  simulated losses per carrier frequency, with optional
                    two-point calibration of the switching energy
    parameter       any dotted scenario path, reporting distortion and efficiency
"""

import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import pandas as pd

from src.api.schemas import ScenarioModel, build_scenario, scenario_variants, set_dotted
from src.core.metrics import calibrate_switching_energy, calibrated_efficiency, deviation_vs_distance
from src.core.ode_oracle import OracleConfig, integrate_loop
from src.core.parallel_dynamics import energy_loss_ch2b, equilibrate, zero_deviation_inductance
from src.pipeline.artifacts import ArtifactWriter
from src.pipeline.runner import simulate, summarize
from src.utils.exceptions import NoRootError, ScenarioValidationError
from src.utils.logging import get_logger

logger = get_logger(__name__)

T = TypeVar("T")

SweepOutput = Tuple[pd.DataFrame, Dict[str, Any]]


def map_grid(func: Callable[[float], T], grid: Sequence[float], workers: int = 1) -> List[T]:
    """Evaluates ``func`` on every grid value; results come back in grid order."""
    values = [float(v) for v in grid]
    results: List[Optional[T]] = [None] * len(values)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {pool.submit(func, value): idx for idx, value in enumerate(values)}
        for future in as_completed(futures):
            idx = futures[future]
            results[idx] = future.result()
            logger.debug("sweep_point_done", index=idx, value=values[idx])
    return results  # type: ignore[return-value]


def inductance_sweep(scenario: ScenarioModel, workers: int = 1) -> SweepOutput:
    """DiSeP loop outcome over the inductance grid and the CH2B reference."""
    sweep = scenario.sweep
    assert sweep is not None and sweep.loop is not None
    loop = sweep.loop
    v2_0 = loop.v2_0
    v1_0 = v2_0 + loop.delta_v0

    def point(l_loop: float) -> Dict[str, Any]:
        p = loop.params(l_loop)
        outcome = equilibrate(p, v1_0, v2_0)
        row: Dict[str, Any] = {
            "topology": "disep",
            "l_h": l_loop,
            "regime": outcome.regime.kind.value,
            "delta_v_inf_v": outcome.delta_v_inf,
            "energy_loss_j": outcome.energy_loss,
            "i_peak_a": outcome.i_peak,
            "t_end_s": outcome.t_end,
        }
        if sweep.oracle:
            trajectory = integrate_loop(p, v1_0, v2_0, OracleConfig.for_loop(p))
            v1, v2 = trajectory.final()
            row["oracle_delta_v_inf_v"] = v1 - v2
        return row

    rows = map_grid(point, sweep.grid(), workers)
    rows.append(
        {
            "topology": "ch2b",
            "l_h": math.nan,
            "regime": "",
            "delta_v_inf_v": 0.0,
            "energy_loss_j": energy_loss_ch2b(loop.c, v1_0, v2_0),
            "i_peak_a": math.nan,
            "t_end_s": math.nan,
        }
    )
    frame = pd.DataFrame(rows)

    try:
        l_zero: Optional[float] = zero_deviation_inductance(loop.c, loop.r, loop.v_d, loop.delta_v0)
    except NoRootError:
        l_zero = None
    l_star = loop.r * loop.r * loop.c / 8.0
    ch2b = energy_loss_ch2b(loop.c, v1_0, v2_0)
    resistive = equilibrate(loop.params(l_star / 2.0), v1_0, v2_0).energy_loss
    summary = {
        "kind": "inductance",
        "critical_inductance_h": l_star,
        "zero_deviation_inductance_h": l_zero,
        "ch2b_energy_loss_j": ch2b,
        "resistive_to_ch2b_loss_ratio": resistive / ch2b if ch2b > 0 else None,
    }
    return frame, summary


def _simulation_sweep(
    grid: Sequence[float],
    variants: Sequence[ScenarioModel],
    workers: int,
    row_builder: Callable[[float, ScenarioModel], List[Dict[str, Any]]],
) -> pd.DataFrame:
    by_value = dict(zip([float(v) for v in grid], variants))

    def point(value: float) -> List[Dict[str, Any]]:
        return row_builder(value, by_value[value])

    chunks = map_grid(point, grid, workers)
    return pd.DataFrame([row for chunk in chunks for row in chunk])


def distance_sweep(
    document: Dict[str, Any],
    scenario: ScenarioModel,
    workers: int = 1,
    oversample: Optional[int] = None,
    default_oversample: int = 50,
) -> SweepOutput:
    """Ladder deviation per hop for every supply voltage (modules start at the supply voltage)."""
    sweep = scenario.sweep
    assert sweep is not None

    grid = sweep.grid()
    base = {k: v for k, v in document.items() if k != "sweep"}
    variants = [
        build_scenario(set_dotted(set_dotted(base, "converter.supply.voltage", float(v)), "converter.v_init", float(v)))
        for v in grid
    ]

    def rows_for(value: float, variant: ScenarioModel) -> List[Dict[str, Any]]:
        result = simulate(variant, oversample, default_oversample)
        k = min(variant.simulation.steady_periods, result.n_periods)
        profile = result.period_means[-k:].mean(axis=0).tolist()
        config = result.config
        return [
            {
                "v_supply_v": value,
                "distance": d,
                "deviation_v": dev,
                "relative_deviation": dev / value if value > 0 else math.nan,
                "settled": result.settled,
            }
            for d, dev in deviation_vs_distance(profile, config.supply_index, config.v_supply)
        ]

    frame = _simulation_sweep(grid, variants, workers, rows_for)
    hop = frame[frame["distance"] > 0]
    summary = {
        "kind": "distance",
        "mean_deviation_per_hop_v": float((hop["deviation_v"] / hop["distance"]).mean()) if len(hop) else None,
        "all_settled": bool(frame["settled"].all()),
    }
    return frame, summary


def switching_rate_sweep(
    document: Dict[str, Any],
    scenario: ScenarioModel,
    workers: int = 1,
    oversample: Optional[int] = None,
    default_oversample: int = 50,
) -> SweepOutput:
    """Loss tallies per carrier frequency and, when calibration targets are given, the calibrated curve."""
    sweep = scenario.sweep
    assert sweep is not None
    tpc = scenario.simulation.transitions_per_change

    def rows_for(value: float, variant: ScenarioModel) -> List[Dict[str, Any]]:
        result = simulate(variant, oversample, default_oversample)
        k = min(variant.simulation.steady_periods, result.n_periods)
        window = result.ledger.window(k)
        losses = window["conduction"] + window["switching"] + window["parallelization"] + window["source"]
        delivered = window["delivered"]
        return [
            {
                "f_carrier_hz": value,
                "delivered_j": delivered,
                "conduction_j": window["conduction"],
                "switching_j": window["switching"],
                "parallelization_j": window["parallelization"],
                "parallelization_per_period_j": window["parallelization"] / window["periods"],
                "source_j": window["source"],
                "non_switching_j": losses - window["switching"],
                "device_transitions": window["transitions"] * tpc,
                "efficiency": delivered / (delivered + losses) if delivered > 0 else math.nan,
                "settled": result.settled,
            }
        ]

    grid = sweep.grid()
    frame = _simulation_sweep(grid, scenario_variants(document, "converter.f_carrier", grid), workers, rows_for)
    summary: Dict[str, Any] = {"kind": "switching_rate", "all_settled": bool(frame["settled"].all())}

    if sweep.calibration:
        points = []
        targets = []
        for target in sweep.calibration:
            match = frame[np.isclose(frame["f_carrier_hz"], target.f_carrier)]
            if match.empty:
                raise ScenarioValidationError(
                    f"calibration frequency {target.f_carrier} Hz is not on the sweep grid", field="sweep.calibration"
                )
            row = match.iloc[0]
            points.append((row["delivered_j"], row["non_switching_j"], row["device_transitions"]))
            targets.append(target.efficiency)
        e_sw = calibrate_switching_energy(points, targets)
        frame["efficiency_calibrated"] = [
            calibrated_efficiency(d, ns, n, e_sw)
            for d, ns, n in zip(frame["delivered_j"], frame["non_switching_j"], frame["device_transitions"])
        ]
        best = int(np.argmax(frame["efficiency_calibrated"].to_numpy()))
        peak = frame.iloc[best]
        summary.update(
            e_sw_j=e_sw,
            peak_f_carrier_hz=float(peak["f_carrier_hz"]),
            peak_efficiency=float(peak["efficiency_calibrated"]),
            interior_peak=0 < best < len(frame) - 1,
        )
    return frame, summary


def parameter_sweep(
    document: Dict[str, Any],
    scenario: ScenarioModel,
    workers: int = 1,
    oversample: Optional[int] = None,
    default_oversample: int = 50,
) -> SweepOutput:
    """Distortion, efficiency and steady profile over any dotted scenario path."""
    sweep = scenario.sweep
    assert sweep is not None and sweep.parameter

    def rows_for(value: float, variant: ScenarioModel) -> List[Dict[str, Any]]:
        result = simulate(variant, oversample, default_oversample)
        summary = summarize(result, variant.simulation.steady_periods)
        eff = summary["efficiency"]
        row: Dict[str, Any] = {
            "value": value,
            "settled": result.settled,
            "thd": summary["thd"],
            "thd_wideband": summary["thd_wideband"],
            "thd_n": summary["thd_n"],
            "efficiency": eff["efficiency"] if eff else math.nan,
        }
        for k, v in enumerate(summary["profile_v"]):
            row[f"mean_v_cap_{k}_v"] = float(v)
        return [row]

    grid = sweep.grid()
    frame = _simulation_sweep(grid, scenario_variants(document, sweep.parameter, grid), workers, rows_for)
    return frame, {"kind": "parameter", "parameter": sweep.parameter, "all_settled": bool(frame["settled"].all())}


def run_sweep(
    document: Dict[str, Any],
    scenario: ScenarioModel,
    out_dir: Path,
    workers: int = 1,
    oversample: Optional[int] = None,
    default_oversample: int = 50,
) -> SweepOutput:
    """Runs the scenario's sweep and writes sweep.csv and sweep.json."""
    sweep = scenario.sweep
    if sweep is None:
        raise ScenarioValidationError("scenario has no sweep block", field="sweep")
    logger.info("sweep_started", name=scenario.name, kind=sweep.kind, points=int(sweep.grid().size), workers=workers)
    if sweep.kind == "inductance":
        frame, summary = inductance_sweep(scenario, workers)
    elif sweep.kind == "distance":
        frame, summary = distance_sweep(document, scenario, workers, oversample, default_oversample)
    elif sweep.kind == "switching_rate":
        frame, summary = switching_rate_sweep(document, scenario, workers, oversample, default_oversample)
    else:
        frame, summary = parameter_sweep(document, scenario, workers, oversample, default_oversample)

    writer = ArtifactWriter(Path(out_dir) / scenario.name)
    writer.write_csv("sweep.csv", frame)
    writer.write_json("sweep.json", {"name": scenario.name, **summary})
    logger.info("sweep_finished", name=scenario.name, kind=sweep.kind, rows=len(frame))
    return frame, summary
