"""Replicate farm and operating characteristics.

Replicate ``r`` of a run with master seed ``m`` always uses the trial seed
derived from ``(m, r)``, so its result does not depend on how many other
replicates run, on the worker count, or on completion order.  Designs run
with the same master seed see the same patient streams.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .decision import DESIGNS, WEIGHT_PRESETS, DesignConfig, UtilityWeights
from .incidence import FAMILIES
from .model import DOSE_NAMES, DOSES, RE, SE, SUBGROUP_NAMES
from .sampler import separate_design_posterior  # noqa: F401  (re-exported)
from .scenarios import ScenarioSpec, calibrate
from .trial import TrialError, TrialResult, run_trial

AXES = ("sample_size", "re_proportion", "generator_family", "weights")
ARMS = tuple((w, d) for w in (RE, SE) for d in DOSES[w])


def replicate_seed(master_seed: int, r: int) -> int:
    """Trial seed of replicate ``r``."""
    return int(np.random.SeedSequence([int(master_seed), int(r)]).generate_state(1, np.uint64)[0])


def default_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover
        return max(1, os.cpu_count() or 1)


@dataclass
class OperatingCharacteristics:
    """Averages over replicates, keyed by ``(w, d)`` or by ``w``."""

    design: str
    scenario: str
    n_reps: int
    seed: int
    selection: dict[tuple[int, int], float]
    none_selected: dict[int, float]
    early_stop: dict[int, float]
    mean_treated: dict[tuple[int, int], float]
    mean_dp: dict[tuple[int, int], float]
    mean_nc: dict[tuple[int, int], float]
    n_failed: int = 0
    failures: list[tuple[int, str]] = field(default_factory=list)

    @classmethod
    def from_results(cls, results, design, scenario, seed, failures=()) -> "OperatingCharacteristics":
        results = list(results)
        n = len(results)
        if n == 0:
            raise ValueError("no successful replicates to aggregate")

        def mean(values):
            return math.fsum(values) / n

        return cls(
            design=design,
            scenario=scenario,
            n_reps=n,
            seed=int(seed),
            selection={(w, d): mean(r.selection[w] == d for r in results) for w, d in ARMS},
            none_selected={w: mean(r.selection[w] is None for r in results) for w in (RE, SE)},
            early_stop={w: mean(r.early_stop[w] for r in results) for w in (RE, SE)},
            mean_treated={a: mean(r.n_treated[a] for r in results) for a in ARMS},
            mean_dp={(w, d): mean(r.events[(w, d, 1)] for r in results) for w, d in ARMS},
            mean_nc={(w, d): mean(r.events[(w, d, 2)] for r in results) for w, d in ARMS},
            n_failed=len(failures),
            failures=list(failures),
        )

    def allocation_ratio(self, w: int, better: int) -> float:
        """Mean patients on dose ``better`` over mean patients on the other dose of ``w``."""
        other = next(d for d in DOSES[w] if d != better)
        den = self.mean_treated[(w, other)]
        return self.mean_treated[(w, better)] / den if den > 0 else math.inf

    def rows(self) -> list[dict]:
        """One row per arm, in the layout of the tabular output."""
        out = []
        for w, d in ARMS:
            out.append({
                "design": self.design,
                "scenario": self.scenario,
                "subgroup": SUBGROUP_NAMES[w],
                "dose": DOSE_NAMES[d],
                "selection_pct": 100.0 * self.selection[(w, d)],
                "mean_n_treated": self.mean_treated[(w, d)],
                "mean_dp": self.mean_dp[(w, d)],
                "mean_nc": self.mean_nc[(w, d)],
                "early_stop_pct": 100.0 * self.early_stop[w],
                "n_reps": self.n_reps,
                "seed": self.seed,
            })
        return out


def _run_one(args):
    scenario, cfg, seed = args
    try:
        return run_trial(scenario, cfg, seed)
    except TrialError as exc:
        return exc


def run_replicates(scenario: ScenarioSpec, design: str, cfg: DesignConfig, n_reps: int, master_seed: int,
                   workers: int | None = 1, progress=None) -> OperatingCharacteristics:
    """Simulate ``n_reps`` trials of ``design`` and aggregate them.

    ``workers > 1`` farms replicates to a process pool; the reduction is
    done in replicate order either way.  ``progress(done, total)`` is
    called as replicates finish.
    """
    if design not in DESIGNS:
        raise ValueError(f"design must be one of {DESIGNS}, got {design!r}")
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    if not scenario.calibrated:
        raise ValueError(f"scenario {scenario.name!r} is not calibrated")
    cfg = replace(cfg, design=design)
    workers = default_workers() if workers is None else max(1, int(workers))
    jobs = [(scenario, cfg, replicate_seed(master_seed, r)) for r in range(n_reps)]

    if workers == 1:
        outcomes = []
        for i, job in enumerate(jobs):
            outcomes.append(_run_one(job))
            if progress:
                progress(i + 1, n_reps)
    else:
        chunk = max(1, min(8, n_reps // (4 * workers)))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = []
            for i, res in enumerate(pool.map(_run_one, jobs, chunksize=chunk)):
                outcomes.append(res)
                if progress:
                    progress(i + 1, n_reps)

    results = [o for o in outcomes if isinstance(o, TrialResult)]
    failures = [(o.seed, str(o)) for o in outcomes if not isinstance(o, TrialResult)]
    return OperatingCharacteristics.from_results(results, design, scenario.name, master_seed, failures)


def _sweep_point(scenario: ScenarioSpec, cfg: DesignConfig, axis: str, value):
    if axis == "sample_size":
        n = int(value)
        if n != value or n < cfg.cohort_size or n % cfg.cohort_size:
            raise ValueError(f"sample size {value!r} must be a positive multiple of the cohort size {cfg.cohort_size}")
        n_cohorts = n // cfg.cohort_size
        if n_cohorts < cfg.n1:
            raise ValueError(f"sample size {n} leaves fewer cohorts than the {cfg.n1} equal-randomization cohorts")
        return scenario, replace(cfg, n_cohorts_total=n_cohorts)
    if axis == "re_proportion":
        p = float(value)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"RE proportion {value!r} must lie in [0, 1]")
        return scenario.with_p_re(p), cfg
    if axis == "generator_family":
        if value not in FAMILIES:
            raise ValueError(f"unknown generator family {value!r}; choose from {FAMILIES}")
        if value == scenario.family and scenario.calibrated:
            return scenario, cfg
        return calibrate(scenario.with_family(value)), cfg
    if axis == "weights":
        return scenario, replace(cfg, weights=weights_from_grid_value(value))
    raise ValueError(f"unknown sweep axis {axis!r}; choose from {AXES}")


def weights_from_grid_value(value) -> UtilityWeights:
    """A preset row number (1-9), a 5-tuple of weights, or UtilityWeights."""
    if isinstance(value, UtilityWeights):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        if not 1 <= value <= len(WEIGHT_PRESETS):
            raise ValueError(f"weight row {value} out of range 1..{len(WEIGHT_PRESETS)}")
        return WEIGHT_PRESETS[value - 1]
    try:
        return UtilityWeights(tuple(float(v) for v in value))
    except TypeError:
        raise ValueError(f"cannot interpret {value!r} as desirability weights") from None


def sensitivity_sweep(scenario: ScenarioSpec, design: str, cfg: DesignConfig, axis: str, grid, n_reps: int,
                      master_seed: int, workers: int | None = 1, progress=None):
    """One :class:`OperatingCharacteristics` per grid value, in grid order.

    Every point reuses ``master_seed``, so points differ only through the
    swept setting.  The whole grid is validated before anything runs.
    """
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {AXES}")
    grid = list(grid)
    if not grid:
        raise ValueError("empty sensitivity grid")
    points = [_sweep_point(scenario, cfg, axis, v) for v in grid]
    out = []
    for value, (sc, c) in zip(grid, points):
        oc = run_replicates(sc, design, c, n_reps, master_seed, workers,
                            progress=(lambda i, n, v=value: progress(v, i, n)) if progress else None)
        out.append((value, oc))
    return out


__all__ = [
    "AXES", "OperatingCharacteristics", "run_replicates", "sensitivity_sweep", "replicate_seed",
    "separate_design_posterior", "weights_from_grid_value", "default_workers",
]
