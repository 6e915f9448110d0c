import math

import pytest

from wasep.scaling import ScalingPlan, g_dimensional, scaling_check


def test_g_dimensional_values():
    assert g_dimensional(1, 10) == 10.0
    assert g_dimensional(2, 10) == pytest.approx(math.log(10))
    assert g_dimensional(3, 10) == 1.0
    assert g_dimensional(5, 10) == 1.0


def test_epsilon_inverse_of_acceleration():
    plan = ScalingPlan(d=1, n=64, a_n=8.0)
    assert plan.epsilon * plan.a_n == 1.0


def test_rule_parsing():
    plan = ScalingPlan.from_epsilon_rule(1, 64, "n_pow:-0.5")
    assert plan.epsilon == pytest.approx(64.0**-0.5)
    assert plan.epsilon_rule_exponent == -0.5
    const = ScalingPlan.from_epsilon_rule(2, 32, "const:0.125")
    assert const.a_n == pytest.approx(8.0)
    with pytest.raises(ValueError):
        ScalingPlan.from_epsilon_rule(1, 16, "bogus:1")


def test_d1_third_power_passes():
    plan = ScalingPlan.from_epsilon_rule(1, 1000, "n_pow:-0.3333333333333333")
    report = scaling_check(plan)
    assert report.clause == "a"
    assert report.lower_ok and report.upper_ok and report.passed


def test_d1_fifth_power_fails_upper():
    plan = ScalingPlan.from_epsilon_rule(1, 1000, "n_pow:-0.2")
    report = scaling_check(plan)
    assert report.lower_ok
    assert not report.upper_ok
    assert not report.passed


def test_d1_half_power_is_marginal():
    # the boundary rate: the strict lower condition fails at equality
    plan = ScalingPlan.from_epsilon_rule(1, 128, "n_pow:-0.5")
    report = scaling_check(plan)
    assert not report.lower_ok
    assert report.upper_ok


def test_d2_and_d3_clauses():
    ok2 = scaling_check(ScalingPlan.from_epsilon_rule(2, 100, "n_pow:-0.75"))
    assert ok2.clause == "b" and ok2.passed
    bad2 = scaling_check(ScalingPlan.from_epsilon_rule(2, 100, "n_pow:-1.0"))
    assert not bad2.lower_ok
    ok3 = scaling_check(ScalingPlan.from_epsilon_rule(3, 30, "n_pow:-0.8"))
    assert ok3.clause == "c" and ok3.passed


def test_report_formatting():
    report = scaling_check(ScalingPlan.from_epsilon_rule(1, 64, "n_pow:-0.4"))
    text = "\n".join(report.lines())
    assert "lower" in text and "upper" in text
