import pytest

from crdesign.config import (
    ConfigError, format_design, format_scenario, format_trial_data, load_scenario, parse_design, parse_scenario,
    parse_trial_data,
)
from crdesign.decision import DesignConfig
from crdesign.model import HIGH, RE, PatientRecord
from crdesign.sampler import McmcConfig

S1 = """
[scenario]
name = s1

[RE-standard]
cir_dp = 0.2
cir_nc = 0.2

[RE-high]
cir_dp = 0.1
cir_nc = 0.3
"""


def test_scenario_round_trip(ref_scenarios):
    for sc in ref_scenarios.values():
        assert parse_scenario(format_scenario(sc)) == sc


def test_uncalibrated_scenario_parses():
    sc = parse_scenario(S1)
    assert sc.targets[(RE, HIGH)] == (0.1, 0.3)
    assert not sc.generators and sc.family == "weibull" and sc.p_re == 0.5


def test_builtin_scenario_name():
    assert load_scenario("builtin:4").calibrated


@pytest.mark.parametrize("text,match", [
    (S1.replace("cir_nc = 0.3", "cir_nc = abc"), r"s.ini:11: \[RE-high\] cir_nc: bad value"),
    (S1.replace("cir_nc = 0.3", "cir_nc = 0.95"), "RE-high: infeasible"),
    (S1.replace("[RE-high]", "[RE-low]"), r"\[RE-low\]: unknown arm"),
    (S1.replace("name = s1", "name = s1\ncolour = red"), r"\[scenario\] colour: unknown field"),
    (S1.replace("cir_dp = 0.1\n", ""), "missing required field 'cir_dp'"),
    ("[RE-high\ncir_dp=1", "File contains"),
    (S1 + "shape_dp = 1.0\n", "incomplete calibration"),
])
def test_scenario_parse_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_scenario(text, "s.ini")


def test_design_round_trip():
    cfg = DesignConfig(n1=3, tau=(0.35, 0.45), mu1=0.6, mcmc=McmcConfig(n_iter=900, n_burn=300))
    assert parse_design(format_design(cfg)) == cfg
    assert parse_design("") == DesignConfig()


def test_design_parse_errors():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_design("[trial]\nx = 1\n")
    with pytest.raises(ConfigError, match="n_burn"):
        parse_design("[mcmc]\nn_iter = 100\nn_burn = 200\n")
    with pytest.raises(ConfigError, match=r"weights"):
        parse_design("[design]\nweights = 0, 5, 10\n")


def test_trial_data_round_trip():
    recs = [PatientRecord(RE, HIGH, 0.25, 0, 1, 0.5), PatientRecord(1, 0, 1.0)]
    assert parse_trial_data(format_trial_data(recs)) == recs


@pytest.mark.parametrize("body,row", [
    ("0,1,0.5,0,0\n1,2,0.5,0,0\n", 3),
    ("0,1,0.5,0,0\n0,1,-1,0,0\n", 3),
    ("0,1,0.5,1,1\n", 2),
    ("0,1,0.5,0\n", 2),
    ("0,1,x,0,0\n", 2),
])
def test_trial_data_errors_name_rows(body, row):
    with pytest.raises(ConfigError, match=f"row {row}:"):
        parse_trial_data("w,d,x,delta1,delta2\n" + body, "t.csv")


def test_trial_data_header_required():
    with pytest.raises(ConfigError, match="header lacks"):
        parse_trial_data("w,d,x\n0,1,0.5\n")
