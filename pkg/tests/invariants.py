"""Randomized trial configurations and the engine invariants checked on them."""

import json

import numpy as np
from hypothesis import strategies as st

from crdesign.decision import WEIGHT_PRESETS, DesignConfig
from crdesign.incidence import FAMILIES
from crdesign.model import ARMS, DOSES, DOSE_NAMES, SUBGROUP_NAMES
from crdesign.sampler import McmcConfig
from crdesign.scenarios import ScenarioSpec, calibrate
from crdesign.trial import run_trial

_DOSE_BY_NAME = {v: k for k, v in DOSE_NAMES.items()}
_GROUP_BY_NAME = {v: k for k, v in SUBGROUP_NAMES.items()}


@st.composite
def arm_targets(draw):
    c1 = draw(st.floats(0.0, 0.7))
    c2 = draw(st.floats(0.0, 0.9 - c1))
    return round(c1, 3), round(c2, 3)


@st.composite
def trial_setups(draw):
    targets = {arm: draw(arm_targets()) for arm in ARMS}
    scenario = ScenarioSpec(
        "random", targets,
        half_fraction=draw(st.sampled_from([0.3, 0.5, 0.7])),
        family=draw(st.sampled_from(FAMILIES)),
        p_re=draw(st.floats(0.05, 0.95)),
    )
    n_cohorts = draw(st.integers(2, 8))
    cfg = DesignConfig(
        n1=draw(st.integers(1, n_cohorts)),
        cohort_size=draw(st.integers(1, 6)),
        n_cohorts_total=n_cohorts,
        accrual_interval=draw(st.sampled_from([0.1, 0.25, 0.5])),
        tau=(draw(st.floats(0.1, 0.6)), draw(st.floats(0.1, 0.6))),
        q=(draw(st.floats(0.5, 0.99)), draw(st.floats(0.5, 0.99))),
        weights=draw(st.sampled_from(WEIGHT_PRESETS)),
        mcmc=McmcConfig(n_iter=300, n_burn=150),
        design=draw(st.sampled_from(("ar", "er", "separate"))),
    )
    seed = draw(st.integers(0, 2**32 - 1))
    return scenario, cfg, seed


def check_trial_invariants(scenario, cfg, seed):
    """Run one trial twice and assert every engine invariant; returns the result."""
    sc = calibrate(scenario)
    res = run_trial(sc, cfg, seed)
    again = run_trial(sc, cfg, seed)
    blob = json.dumps(res.to_dict(), sort_keys=True)
    assert blob == json.dumps(again.to_dict(), sort_keys=True), "determinism"

    # sample-size cap
    assert res.n_enrolled == sum(res.n_treated.values()) <= cfg.max_sample_size
    # dose legality
    for (w, d), n in res.n_treated.items():
        assert d in DOSES[w] or n == 0
    open_flags = {w: True for w in SUBGROUP_NAMES}
    for entry in res.history:
        # monotone closure: a closed subgroup never enrolls again nor reopens
        for g in entry.get("closed", []):
            open_flags[_GROUP_BY_NAME[g]] = False
        for g, dose in entry["assigned"]:
            w, d = _GROUP_BY_NAME[g], _DOSE_BY_NAME[dose]
            assert open_flags[w], "enrolled into a closed subgroup"
            assert d in DOSES[w], "illegal dose"
            # every assigned dose carried positive randomization probability
            assert entry["randomization"][g].get(dose, 0.0) > 0.0
        # randomization distributions are valid
        for g, probs in entry["randomization"].items():
            assert set(probs) <= {DOSE_NAMES[d] for d in DOSES[_GROUP_BY_NAME[g]]}
            assert all(0.0 <= p <= 1.0 for p in probs.values())
            assert abs(sum(probs.values()) - 1.0) < 1e-12
        # event-probability partition of every arm the analysis looked at
        for g, summ in entry.get("analysis", {}).items():
            assert set(summ["admissible"]) <= set(summ["utility"])
    for w in SUBGROUP_NAMES:
        assert res.early_stop[w] == (not open_flags[w])
        if res.early_stop[w]:
            assert res.selection[w] is None
        assert res.selection[w] is None or res.selection[w] in DOSES[w]
    return res


def check_partition(draws_values, nu=1.0):
    """Outcome probabilities of every arm are non-negative and sum to one per draw."""
    from crdesign.decision import _probabilities

    for w, d in ARMS:
        p = _probabilities(draws_values, w, d, nu)
        assert np.all(p >= -1e-15)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)
