"""Single-trial engine: cohort enrollment, interim analyses, final selection.

Cohort ``j`` arrives at calendar time ``j * accrual_interval``.  The first
``n1`` cohorts are randomized 1:1 within each subgroup's dose pair; every
later cohort is preceded by an interim analysis of everything observable
at that moment.  After the last cohort the trial waits until the last
patient has completed ``nu`` of follow-up and runs the final analysis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import decision
from .decision import DesignConfig
from .model import CAUSE_NAMES, DOSES, DOSE_NAMES, RE, SE, SUBGROUP_NAMES
from .sampler import Dataset, PosteriorDraws, sample_posterior, separate_design_posterior
from .scenarios import LatentPatient, PatientStream, ScenarioSpec


class TrialError(RuntimeError):
    def __init__(self, message, seed=None):
        super().__init__(f"{message} (seed={seed})" if seed is not None else message)
        self.seed = seed


def fit_posterior(data: Dataset, cfg: DesignConfig, seed: int) -> PosteriorDraws:
    mcmc = replace(cfg.mcmc, seed=int(seed))
    if cfg.design == "separate":
        return separate_design_posterior(data, cfg.prior, mcmc)
    return sample_posterior(data, cfg.prior, mcmc)


@dataclass
class Analysis:
    """Decisions taken from one posterior fit."""

    draws: PosteriorDraws
    admissible: dict[int, tuple[int, ...]]
    utilities: dict[int, dict[int, float]]
    probabilities: dict[int, dict[int, float]]
    preference: dict[int, float]

    def summary(self) -> dict:
        return {
            SUBGROUP_NAMES[w]: {
                "admissible": [DOSE_NAMES[d] for d in self.admissible[w]],
                "utility": {DOSE_NAMES[d]: round(u, 6) for d, u in self.utilities[w].items()},
                "randomization": {DOSE_NAMES[d]: round(p, 6) for d, p in self.probabilities[w].items()},
            }
            for w in self.admissible
        }


def analyze(data: Dataset, cfg: DesignConfig, seed: int, subgroups=(RE, SE), final=False) -> Analysis:
    """Fit the posterior and evaluate admissibility and utilities per subgroup."""
    draws = fit_posterior(data, cfg, seed)
    admissible, utilities, probabilities, preference = {}, {}, {}, {}
    for w in subgroups:
        a = decision.admissible_set(w, draws, cfg)
        admissible[w] = a
        utilities[w] = {
            d: decision.posterior_mean_utility(w, d, draws, cfg.weights, cfg.nu, cfg.marginal)
            for d in DOSES[w]
        }
        probabilities[w] = decision.randomization_probabilities(w, a, draws, cfg) if a else {}
        if final and len(a) == 2:
            preference[w] = decision.preference_probability(w, draws, cfg)
    return Analysis(draws, admissible, utilities, probabilities, preference)


@dataclass
class TrialState:
    calendar_time: float = 0.0
    patients: list[LatentPatient] = field(default_factory=list)
    enrollment_open: dict[int, bool] = field(default_factory=lambda: {RE: True, SE: True})
    cohort_index: int = 0
    rng_seed: int = 0
    history: list[dict] = field(default_factory=list)
    assign_rng: np.random.Generator | None = None
    analysis_seeds: np.ndarray | None = None

    @classmethod
    def start(cls, seed: int, n_analyses: int) -> tuple["TrialState", np.random.Generator]:
        """Fresh state plus the generator that should drive the patient stream."""
        stream_ss, assign_ss, mcmc_ss = np.random.SeedSequence(seed).spawn(3)
        state = cls(
            rng_seed=seed,
            assign_rng=np.random.default_rng(assign_ss),
            analysis_seeds=mcmc_ss.generate_state(n_analyses, dtype=np.uint64),
        )
        return state, np.random.default_rng(stream_ss)


def observable_data(patients, at_time: float, nu: float) -> Dataset:
    """What the design may see at calendar time ``at_time``.

    Follow-up is capped at ``nu``; patients enrolled at ``at_time`` itself
    have no follow-up yet and are left out.
    """
    rows = []
    for p in patients:
        follow = min(at_time - p.enroll_time, nu)
        if follow <= 0:
            continue
        rec = p.observe(follow)
        rows.append((rec.w, rec.d, rec.x, rec.delta1, rec.delta2))
    if not rows:
        return Dataset.empty()
    a = np.array(rows, dtype=float)
    return Dataset(a[:, 0].astype(np.int64), a[:, 1].astype(np.int64), a[:, 2],
                   a[:, 3].astype(np.int64), a[:, 4].astype(np.int64))


def enroll_cohort(state: TrialState, cfg: DesignConfig, stream: PatientStream) -> TrialState:
    j = state.cohort_index
    t = j * cfg.accrual_interval
    state.calendar_time = t
    entry: dict = {"cohort": j, "time": t}
    open_groups = [w for w in (RE, SE) if state.enrollment_open[w]]
    if j < cfg.n1:
        probs = {w: {d: 1.0 / len(DOSES[w]) for d in DOSES[w]} for w in open_groups}
        entry["phase"] = "equal"
    else:
        data = observable_data(state.patients, t, cfg.nu)
        result = analyze(data, cfg, int(state.analysis_seeds[j]), open_groups)
        entry["phase"] = "adaptive"
        entry["n_observed"] = len(data)
        entry["analysis"] = result.summary()
        probs = {}
        for w in open_groups:
            if result.admissible[w]:
                probs[w] = result.probabilities[w]
            else:
                state.enrollment_open[w] = False
        entry["closed"] = [SUBGROUP_NAMES[w] for w in open_groups if not state.enrollment_open[w]]
    entry["randomization"] = {
        SUBGROUP_NAMES[w]: {DOSE_NAMES[d]: p for d, p in pw.items()} for w, pw in probs.items()
    }

    assigned = []
    skipped = 0
    for _ in range(cfg.cohort_size):
        arrival = stream.next()
        u = state.assign_rng.random()
        if not state.enrollment_open[arrival.w]:
            skipped += 1
            continue
        doses = list(probs[arrival.w])
        cum = np.cumsum([probs[arrival.w][d] for d in doses])
        d = doses[min(int(np.searchsorted(cum, u, side="right")), len(doses) - 1)]
        state.patients.append(stream.realize(arrival, d, t))
        assigned.append((SUBGROUP_NAMES[arrival.w], DOSE_NAMES[d]))
    entry["assigned"] = assigned
    entry["skipped"] = skipped
    state.history.append(entry)
    state.cohort_index += 1
    return state


@dataclass
class TrialResult:
    seed: int
    design: str
    selection: dict[int, int | None]
    early_stop: dict[int, bool]
    n_treated: dict[tuple[int, int], int]
    events: dict[tuple[int, int, int], int]
    n_enrolled: int
    history: list[dict]
    final: dict

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "design": self.design,
            "n_enrolled": self.n_enrolled,
            "selection": {SUBGROUP_NAMES[w]: (DOSE_NAMES[d] if d is not None else None)
                          for w, d in self.selection.items()},
            "early_stop": {SUBGROUP_NAMES[w]: v for w, v in self.early_stop.items()},
            "n_treated": {f"{SUBGROUP_NAMES[w]}-{DOSE_NAMES[d]}": n for (w, d), n in self.n_treated.items()},
            "events": {f"{SUBGROUP_NAMES[w]}-{DOSE_NAMES[d]}-{CAUSE_NAMES[k]}": n
                       for (w, d, k), n in self.events.items()},
            "final": self.final,
            "history": self.history,
        }


def run_trial(scenario: ScenarioSpec, cfg: DesignConfig, seed: int) -> TrialResult:
    """Simulate one complete trial; deterministic in ``(scenario, cfg, seed)``."""
    seed = int(seed)
    try:
        state, stream_rng = TrialState.start(seed, cfg.n_cohorts_total + 1)
        stream = PatientStream(scenario, stream_rng)
        while state.cohort_index < cfg.n_cohorts_total and any(state.enrollment_open.values()):
            enroll_cohort(state, cfg, stream)

        last_entry = max((p.enroll_time for p in state.patients), default=state.calendar_time)
        t_final = last_entry + cfg.nu
        state.calendar_time = t_final
        still_open = [w for w in (RE, SE) if state.enrollment_open[w]]
        selection = {RE: None, SE: None}
        final: dict = {"time": t_final}
        if still_open:
            data = observable_data(state.patients, t_final, cfg.nu)
            result = analyze(data, cfg, int(state.analysis_seeds[-1]), still_open, final=True)
            for w in still_open:
                selection[w] = decision.final_selection(w, result.admissible[w], result.draws, cfg)
            final.update(result.summary())
            final["preference"] = {SUBGROUP_NAMES[w]: p for w, p in result.preference.items()}
    except Exception as exc:
        raise TrialError(f"trial failed: {exc!r}", seed) from exc

    n_treated = {(w, d): 0 for w in (RE, SE) for d in DOSES[w]}
    events = {(w, d, k): 0 for w in (RE, SE) for d in DOSES[w] for k in (1, 2)}
    for p in state.patients:
        n_treated[(p.w, p.d)] += 1
        if p.cause and p.event_time <= cfg.nu:
            events[(p.w, p.d, p.cause)] += 1
    return TrialResult(
        seed=seed,
        design=cfg.design,
        selection=selection,
        early_stop={w: not state.enrollment_open[w] for w in (RE, SE)},
        n_treated=n_treated,
        events=events,
        n_enrolled=len(state.patients),
        history=state.history,
        final=final,
    )
