import pytest

from src.core.parallel_dynamics import classify_regime
from src.pipeline import verification
from src.pipeline.verification import (
    FAMILIES,
    NEAR_CRITICAL_BAND,
    Draw,
    DrawCheck,
    check_draw,
    draw_cases,
    verify_oracle,
)
from src.utils.exceptions import DomainError, OracleToleranceError


def test_draws_are_seeded_and_in_range():
    draws = draw_cases(20, seed=3)
    assert len(draws) == 60
    assert draws == draw_cases(20, seed=3)
    assert draws != draw_cases(20, seed=4)
    for idx, d in enumerate(draws):
        assert 1e-4 <= d.c <= 1e-1
        assert 1e-3 <= d.r <= 1.0
        assert 1e-8 <= d.l <= 1e-2
        assert 0.0 <= d.v_d <= 3.0
        assert d.v_d < d.delta_v0 <= 50.0 + 1e-9
        assert d.family == FAMILIES[idx % 3]


def test_families_land_in_their_regime():
    for d in draw_cases(30, seed=7):
        regime = classify_regime(d.params)
        offset = abs(d.l / (d.r * d.r * d.c / 8.0) - 1.0)
        if d.family == "resistive":
            assert regime.resistive
        elif d.family == "inductive":
            assert not regime.resistive
        else:
            assert d.boundary
            assert offset <= NEAR_CRITICAL_BAND * (1.0 + 1e-9)


def test_inductive_draw_matches_oracle():
    check = check_draw(Draw(c=1e-3, r=0.1, l=1e-5, v_d=1.0, v1_0=20.0, v2_0=5.0))
    assert check.regime == "InductanceDominated"
    assert check.engaged
    assert check.t_end_dev is not None
    assert check.breaches() == []


def test_near_critical_draw_checks_continuity():
    l_star = 0.1 * 0.1 * 1e-3 / 8.0
    check = check_draw(Draw(c=1e-3, r=0.1, l=l_star * 1.01, v_d=1.0, v1_0=20.0, v2_0=5.0, family="near_critical"))
    assert check.continuity_dev is not None
    assert check.breaches() == []


def test_disengaged_draw():
    check = check_draw(Draw(c=1e-3, r=0.1, l=1e-5, v_d=2.0, v1_0=11.0, v2_0=10.0))
    assert not check.engaged
    assert check.voltage_dev == pytest.approx(0.0, abs=1e-12)
    assert check.energy_dev == 0.0


def test_breach_reasons():
    draw = Draw(c=1e-3, r=0.1, l=1e-5, v_d=1.0, v1_0=20.0, v2_0=5.0)
    check = DrawCheck(draw, "InductanceDominated", True, 2e-3, 1e-3, None, 5e-3, "rk4")
    reasons = check.breaches()
    assert len(reasons) == 2
    assert reasons[0].startswith("voltage deviation")
    assert reasons[1].startswith("boundary discontinuity")


def test_breach_raises_with_draw(monkeypatch):
    monkeypatch.setattr(verification, "VOLTAGE_TOL", -1.0)
    with pytest.raises(OracleToleranceError) as info:
        verify_oracle(2, seed=1)
    assert info.value.code == 5
    assert set(info.value.draw) >= {"c", "r", "l", "v_d", "v1_0", "v2_0", "family"}

    report = verify_oracle(2, seed=1, raise_on_breach=False)
    assert not report.passed
    assert len(report.failures) == 6
    assert len(report.to_frame()) == 6


def test_report_summary():
    report = verify_oracle(3, seed=2, workers=2, raise_on_breach=False)
    summary = report.summary()
    assert summary["passed"] is True
    assert summary["n_cases"] == 3
    assert summary["n_draws"] == 9
    assert sum(summary["regime_counts"].values()) == 9
    assert summary["family_counts"] == {family: 3 for family in FAMILIES}
    assert {"voltage_dev_rel", "method", "regime", "family"} <= set(report.to_frame().columns)
    # Every resistive draw is past the fixed-step budget and goes through the batch solve.
    methods = {check.method for check in report.checks if check.draw.family == "resistive"}
    assert methods == {"radau"}


def test_case_count_must_be_positive():
    with pytest.raises(DomainError):
        verify_oracle(0, seed=1)
