import json

import numpy as np
import pytest

from crdesign.decision import DesignConfig
from crdesign.model import DOSES, HIGH, LOW, RE, SE, STANDARD
from crdesign.scenarios import LatentPatient, PatientStream, ScenarioSpec, calibrate
from crdesign.trial import TrialState, analyze, enroll_cohort, observable_data, run_trial

ALL_ARMS = ((RE, STANDARD), (RE, HIGH), (SE, LOW), (SE, STANDARD))


@pytest.fixture(scope="module")
def no_event_scenario():
    return calibrate(ScenarioSpec("quiet", {arm: (0.0, 0.0) for arm in ALL_ARMS}))


def test_zero_hazard_trial_runs_to_cap(no_event_scenario, fast_cfg):
    r = run_trial(no_event_scenario, fast_cfg, 3)
    assert r.n_enrolled == 100
    assert r.early_stop == {RE: False, SE: False}
    assert all(v == 0 for v in r.events.values())
    for entry in r.history:
        if entry["phase"] == "adaptive":
            for g in entry["analysis"].values():
                assert len(g["admissible"]) == 2


def test_first_cohorts_are_equal_randomization(ref_scenarios, fast_cfg):
    r = run_trial(ref_scenarios[1], fast_cfg, 1)
    for entry in r.history[:fast_cfg.n1]:
        assert entry["phase"] == "equal"
        assert "analysis" not in entry
        for probs in entry["randomization"].values():
            assert set(probs.values()) == {0.5}
    assert all(e["phase"] == "adaptive" for e in r.history[fast_cfg.n1:])


def test_deterministic_bytes(ref_scenarios, fast_cfg):
    a = json.dumps(run_trial(ref_scenarios[3], fast_cfg, 77).to_dict(), sort_keys=True)
    b = json.dumps(run_trial(ref_scenarios[3], fast_cfg, 77).to_dict(), sort_keys=True)
    assert a == b
    c = json.dumps(run_trial(ref_scenarios[3], fast_cfg, 78).to_dict(), sort_keys=True)
    assert a != c


def test_result_invariants(ref_scenarios, fast_cfg):
    r = run_trial(ref_scenarios[3], fast_cfg, 5)
    assert r.n_enrolled == sum(r.n_treated.values()) <= fast_cfg.max_sample_size
    assert set(r.n_treated) == set(ALL_ARMS)
    for (w, d, k), n in r.events.items():
        assert n <= r.n_treated[(w, d)]
    for w, sel in r.selection.items():
        assert sel is None or sel in DOSES[w]
        if r.early_stop[w]:
            assert sel is None


def test_observable_data_censors_and_drops():
    pts = [
        LatentPatient(RE, STANDARD, 0.0, 0.3, 1),  # event seen
        LatentPatient(RE, HIGH, 0.5, 0.8, 2),  # in follow-up at t=1: censored at 0.5
        LatentPatient(SE, LOW, 1.0, 0.1, 1),  # enrolled now: excluded
        LatentPatient(SE, STANDARD, 0.0, 5.0, 2),  # follow-up capped at nu
    ]
    d = observable_data(pts, 1.0, 1.0)
    assert len(d) == 3
    np.testing.assert_allclose(d.x, [0.3, 0.5, 1.0])
    assert list(d.delta1) == [1, 0, 0] and list(d.delta2) == [0, 0, 0]


def test_singleton_admissible_assigns_everyone(ref_scenarios, monkeypatch, fast_cfg):
    from crdesign import trial as trial_mod

    real = trial_mod.analyze

    def fake(data, cfg, seed, subgroups=(RE, SE), final=False):
        res = real(data, cfg, seed, subgroups, final)
        if RE in res.admissible:
            res.admissible[RE] = (STANDARD,)
            res.probabilities[RE] = {STANDARD: 1.0}
        if SE in res.admissible:
            res.admissible[SE] = ()
            res.probabilities[SE] = {}
        return res

    monkeypatch.setattr(trial_mod, "analyze", fake)
    r = run_trial(ref_scenarios[1], fast_cfg, 4)
    adaptive = [e for e in r.history if e["phase"] == "adaptive"]
    assert adaptive[0]["closed"] == ["SE"]
    for e in adaptive:
        for g, dose in e["assigned"]:
            assert (g, dose) == ("RE", "standard")
    assert r.early_stop[SE] and not r.early_stop[RE]
    assert r.selection[SE] is None


def test_closed_subgroup_never_reopens(ref_scenarios, fast_cfg):
    r = run_trial(ref_scenarios[3], fast_cfg, 11)
    closed = set()
    for e in r.history:
        assert not closed & {g for g, _ in e["assigned"]}
        closed |= set(e.get("closed", []))


def test_enroll_cohort_skips_closed_arrivals(ref_scenarios, fast_cfg):
    state, rng = TrialState.start(0, fast_cfg.n_cohorts_total + 1)
    stream = PatientStream(ref_scenarios[1], rng)
    state.enrollment_open[SE] = False
    enroll_cohort(state, fast_cfg, stream)
    entry = state.history[-1]
    assert all(g == "RE" for g, _ in entry["assigned"])
    assert len(entry["assigned"]) + entry["skipped"] == fast_cfg.cohort_size


def test_final_analysis_on_complete_data(ref_scenarios, fast_cfg):
    r = run_trial(ref_scenarios[1], fast_cfg, 2)
    last_enroll = (fast_cfg.n_cohorts_total - 1) * fast_cfg.accrual_interval
    assert r.final["time"] == pytest.approx(last_enroll + fast_cfg.nu)


def test_analyze_reports_both_doses(ref_scenarios, fast_cfg):
    from crdesign.sampler import Dataset
    from crdesign.model import PatientRecord
    recs = [PatientRecord(w, d, 1.0) for w, d in ALL_ARMS for _ in range(5)]
    res = analyze(Dataset.from_records(recs), fast_cfg, 0)
    for w in (RE, SE):
        assert set(res.utilities[w]) == set(DOSES[w])
        assert sum(res.probabilities[w].values()) == pytest.approx(1.0)


def test_er_design_uses_even_split(ref_scenarios, fast_cfg):
    from dataclasses import replace
    r = run_trial(ref_scenarios[2], replace(fast_cfg, design="er"), 6)
    for e in r.history:
        for probs in e["randomization"].values():
            if len(probs) == 2:
                assert set(probs.values()) == {0.5}
