# src/pipeline/runner.py

"""
Runs one scenario: simulation, metrics and artifact emission.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from src.api.schemas import ScenarioModel
from src.core.converter_sim import SimResult, run
from src.core.metrics import (
    busiest_link_dwell_peak,
    deviation_vs_distance,
    efficiency_breakdown,
    output_spectrum,
    spectrum_frame,
    thd,
    thd_n,
)
from src.pipeline.artifacts import ArtifactWriter
from src.utils.exceptions import DomainError, NotSettledError, log_and_raise
from src.utils.logging import get_logger

logger = get_logger(__name__)


@dataclass
class ScenarioReport:
    """Outcome of a scenario run."""

    name: str
    result: SimResult
    summary: Dict[str, Any]
    artifacts: List[Path] = field(default_factory=list)

    @property
    def settled(self) -> bool:
        return self.result.settled

    def table(self) -> pd.DataFrame:
        """Per-module summary table printed by the CLI."""
        profile = self.summary["profile_v"]
        return pd.DataFrame(
            {
                "module": np.arange(len(profile)),
                "mean_v": np.round(profile, 3),
                "distance": [abs(k - self.result.config.supply_index) for k in range(len(profile))],
            }
        )


def simulate(scenario: ScenarioModel, oversample: Optional[int] = None, default_oversample: int = 50) -> SimResult:
    config = scenario.converter_config()
    options = scenario.sim_options(oversample, default_oversample)
    return run(config, scenario.modulator_config(), scenario.horizon, options)


def summarize(result: SimResult, steady_periods: int = 10) -> Dict[str, Any]:
    """Steady profile, ladder deviations, distortion and efficiency of a run."""
    config = result.config
    k = min(steady_periods, result.n_periods)
    profile = result.period_means[-k:].mean(axis=0)
    summary: Dict[str, Any] = {
        "settled": result.settled,
        "n_periods": result.n_periods,
        "steady_periods": k,
        "dt_s": result.dt,
        "profile_v": profile,
        "deviation_vs_distance_v": [
            {"distance": d, "deviation_v": v}
            for d, v in deviation_vs_distance(profile.tolist(), config.supply_index, config.v_supply)
        ],
        "losses": result.loss.to_dict(),
        "energy_in_j": result.energy_in_j,
        "energy_delivered_j": result.energy_delivered_j,
        "energy_residual_j": result.energy_residual_j,
    }
    window = result.last_periods(k)
    links = result.link_currents[window]
    summary["link_current_peak_a"] = float(np.max(np.abs(links))) if links.size else 0.0
    summary["link_dwell_peak_a"] = busiest_link_dwell_peak(links) if links.size else 0.0

    report, samples = output_spectrum(result, k)
    wide, _ = output_spectrum(result, k, n_harmonics=None)
    if report.fundamental > 0.0:
        summary["thd"] = thd(report) if report.n_harmonics >= 2 else None
        summary["thd_wideband"] = thd(wide) if wide.n_harmonics >= 2 else None
        summary["thd_n"] = thd_n(samples, report)
        summary["fundamental_v"] = report.fundamental
    else:
        summary.update(thd=None, thd_wideband=None, thd_n=None, fundamental_v=0.0)

    try:
        summary["efficiency"] = efficiency_breakdown(result, k)
    except DomainError:
        summary["efficiency"] = None
    return summary


def run_scenario(
    scenario: ScenarioModel,
    out_dir: Path,
    oversample: Optional[int] = None,
    default_oversample: int = 50,
) -> ScenarioReport:
    """
    Simulates a scenario and writes its declared artifacts.

    Artifacts are written even when the run did not settle; the
    NotSettledError is raised afterwards.
    """
    result = simulate(scenario, oversample, default_oversample)
    summary = summarize(result, scenario.simulation.steady_periods)
    summary["name"] = scenario.name
    writer = ArtifactWriter(Path(out_dir) / scenario.name)

    outputs = set(scenario.outputs)
    if "waveforms" in outputs:
        writer.write_csv("waveforms.csv", result.waveform_frame())
    if "periods" in outputs:
        writer.write_csv("periods.csv", result.period_frame())
    if "spectrum" in outputs:
        k = summary["steady_periods"]
        report, _ = output_spectrum(result, k)
        writer.write_csv("spectrum.csv", spectrum_frame(report))
    if "modes" in outputs:
        writer.write_csv("modes.csv", result.mode_frame(1))
    if "losses" in outputs:
        writer.write_json(
            "losses.json",
            {
                "name": scenario.name,
                "losses": summary["losses"],
                "efficiency": summary["efficiency"],
                "energy_in_j": summary["energy_in_j"],
                "energy_delivered_j": summary["energy_delivered_j"],
                "energy_residual_j": summary["energy_residual_j"],
            },
        )
    if "profile" in outputs:
        writer.write_json("profile.json", summary)

    report = ScenarioReport(name=scenario.name, result=result, summary=summary, artifacts=list(writer.written))
    logger.info("scenario_finished", name=scenario.name, settled=result.settled, artifacts=len(writer.written))
    if not result.settled:
        log_and_raise(
            NotSettledError(
                f"scenario {scenario.name!r} did not settle within {result.n_periods} periods; "
                f"artifacts written to {writer.out_dir}"
            )
        )
    return report
