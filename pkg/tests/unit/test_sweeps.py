import json
import time

import pytest

from src.api.schemas import build_scenario
from src.pipeline.sweeps import inductance_sweep, map_grid, run_sweep
from src.utils.exceptions import ScenarioValidationError

LOOP = {"c": 0.015, "r": 0.02, "v_d": 2.0, "delta_v0": 10.0, "v2_0": 30.0}


def inductance_document(oracle=False):
    return {
        "schema_version": 1,
        "name": "loop",
        "sweep": {
            "kind": "inductance",
            "start": 1e-8,
            "stop": 1e-4,
            "points": 5,
            "scale": "log",
            "oracle": oracle,
            "loop": LOOP,
        },
    }


def test_map_grid_keeps_grid_order():
    def slow_square(x):
        time.sleep(0.01 * (5 - x))
        return x * x

    assert map_grid(slow_square, [1, 2, 3, 4], workers=4) == [1.0, 4.0, 9.0, 16.0]


def test_inductance_sweep_rows_and_summary():
    frame, summary = inductance_sweep(build_scenario(inductance_document()), workers=2)
    disep = frame[frame["topology"] == "disep"]
    assert len(disep) == 5
    assert disep["l_h"].tolist() == pytest.approx([1e-8, 1e-7, 1e-6, 1e-5, 1e-4])
    assert disep["regime"].tolist()[:2] == ["ResistanceDominated"] * 2
    assert disep["regime"].tolist()[2:] == ["InductanceDominated"] * 3
    assert disep["delta_v_inf_v"].iloc[0] == pytest.approx(2.0, rel=1e-6)
    # Past the zero-deviation point the loop overshoots.
    assert disep["delta_v_inf_v"].iloc[-1] < 0.0

    ch2b = frame[frame["topology"] == "ch2b"].iloc[0]
    assert ch2b["delta_v_inf_v"] == 0.0
    assert ch2b["energy_loss_j"] == pytest.approx(0.375)

    assert summary["critical_inductance_h"] == pytest.approx(7.5e-7)
    assert summary["zero_deviation_inductance_h"] == pytest.approx(4.6e-6, rel=0.01)
    assert summary["resistive_to_ch2b_loss_ratio"] == pytest.approx(0.96, abs=1e-12)


def test_inductance_sweep_with_oracle_column():
    frame, _ = inductance_sweep(build_scenario(inductance_document(oracle=True)))
    disep = frame[frame["topology"] == "disep"]
    assert disep["oracle_delta_v_inf_v"].tolist() == pytest.approx(disep["delta_v_inf_v"].tolist(), abs=0.02)


def test_run_sweep_writes_table_and_summary(tmp_path):
    document = inductance_document()
    frame, summary = run_sweep(document, build_scenario(document), tmp_path, workers=2)
    assert (tmp_path / "loop" / "sweep.csv").read_text().startswith("topology,l_h,regime")
    written = json.loads((tmp_path / "loop" / "sweep.json").read_text())
    assert written["schema_version"] == 1
    assert written["kind"] == "inductance"
    assert written["critical_inductance_h"] == pytest.approx(summary["critical_inductance_h"])


def test_run_sweep_needs_sweep_block(tiny_document, tmp_path):
    with pytest.raises(ScenarioValidationError):
        run_sweep(tiny_document, build_scenario(tiny_document), tmp_path)


def test_parameter_sweep_over_carrier(tiny_document, tmp_path):
    tiny_document["sweep"] = {"kind": "parameter", "parameter": "converter.f_carrier", "values": [1000.0, 2000.0]}
    frame, summary = run_sweep(tiny_document, build_scenario(tiny_document), tmp_path, workers=2)
    assert frame["value"].tolist() == [1000.0, 2000.0]
    assert summary["all_settled"]
    assert frame["mean_v_cap_2_v"].tolist() == pytest.approx([10.0, 10.0])
    assert frame["thd_n"].notna().all()


def test_calibration_frequency_must_be_on_grid(tiny_document, tmp_path):
    tiny_document["converter"]["r_load"] = 20.0
    tiny_document["sweep"] = {
        "kind": "switching_rate",
        "values": [1000.0, 2000.0],
        "calibration": [{"f_carrier": 3000.0, "efficiency": 0.9}],
    }
    with pytest.raises(ScenarioValidationError) as info:
        run_sweep(tiny_document, build_scenario(tiny_document), tmp_path)
    assert info.value.field == "sweep.calibration"


def test_switching_rate_calibration(tiny_document, tmp_path):
    tiny_document["converter"]["r_load"] = 20.0
    tiny_document["sweep"] = {
        "kind": "switching_rate",
        "values": [1000.0, 2000.0],
        "calibration": [{"f_carrier": 1000.0, "efficiency": 0.9}, {"f_carrier": 2000.0, "efficiency": 0.85}],
    }
    frame, summary = run_sweep(tiny_document, build_scenario(tiny_document), tmp_path)
    assert summary["e_sw_j"] >= 0.0
    assert (frame["device_transitions"] > 0).all()
    assert (frame["delivered_j"] > 0).all()
    assert frame["efficiency_calibrated"].between(0.0, 1.0).all()
    assert summary["peak_f_carrier_hz"] in (1000.0, 2000.0)
