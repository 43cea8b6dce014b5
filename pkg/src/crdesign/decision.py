"""Utilities, incidence rates, admissible sets and dose decisions.

Posterior quantities are Monte-Carlo averages over retained draws.  Per-draw
outcome probabilities for an arm are computed once and cached on the
:class:`~crdesign.sampler.PosteriorDraws` object, so admissibility,
randomization and the final selection at one analysis share a single
quadrature pass per arm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import incidence
from .model import DOSES, HIGH, LOW, RE, STANDARD, ModelParams, PriorConfig, gamma_slot
from .sampler import McmcConfig, PosteriorDraws

DESIGNS = ("ar", "er", "separate")


@dataclass(frozen=True)
class UtilityWeights:
    """Desirability of early DP, early NC, late DP, late NC, and no event."""

    o: tuple[float, float, float, float, float] = (0.0, 5.0, 10.0, 20.0, 100.0)

    def __post_init__(self):
        if len(self.o) != 5:
            raise ValueError("need five desirability weights")
        if any(not 0 <= v <= 100 for v in self.o):
            raise ValueError("desirability weights must lie in [0, 100]")
        if any(v > self.o[4] for v in self.o[:4]):
            raise ValueError("the event-free outcome must be the most desirable")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.o, dtype=float)


DEFAULT_WEIGHTS = UtilityWeights()

WEIGHT_PRESETS = tuple(
    UtilityWeights(tuple(float(v) for v in row))
    for row in (
        (0, 5, 5, 10, 100),
        (0, 5, 20, 30, 100),
        (0, 5, 10, 20, 100),
        (0, 0, 5, 5, 100),
        (0, 0, 20, 20, 100),
        (0, 0, 10, 10, 100),
        (5, 0, 10, 5, 100),
        (5, 0, 30, 20, 100),
        (5, 0, 20, 10, 100),
    )
)


@dataclass(frozen=True)
class DesignConfig:
    """Design constants.  ``design`` picks AR, ER or the Separate comparator."""

    nu: float = 1.0
    n1: int = 4
    cohort_size: int = 5
    n_cohorts_total: int = 20
    accrual_interval: float = 0.25
    tau: tuple[float, float] = (0.4, 0.4)
    q: tuple[float, float] = (0.95, 0.95)
    mu0: float = 0.5
    mu1: float = 0.5
    weights: UtilityWeights = DEFAULT_WEIGHTS
    prior: PriorConfig = field(default_factory=PriorConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    design: str = "ar"

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ValueError(f"design must be one of {DESIGNS}, got {self.design!r}")
        if not (0 <= self.n1 <= self.n_cohorts_total):
            raise ValueError("need 0 <= n1 <= n_cohorts_total")
        if self.cohort_size < 1:
            raise ValueError("cohort_size must be positive")
        if not (self.nu > 0 and self.accrual_interval > 0):
            raise ValueError("nu and accrual_interval must be positive")
        for name, v in (("tau", self.tau), ("q", self.q), ("mu", (self.mu0, self.mu1))):
            if any(not 0 < t < 1 for t in v):
                raise ValueError(f"{name} cut-offs must lie in (0, 1)")

    @property
    def max_sample_size(self) -> int:
        return self.cohort_size * self.n_cohorts_total

    @property
    def marginal(self) -> bool:
        return self.design == "separate"

    def mu(self, w: int) -> float:
        return self.mu0 if w == RE else self.mu1


def arm_shape_rate(values: np.ndarray, w: int, d: int):
    """Per-draw Weibull (shape, rate) of arm ``(w, d)`` from ``(n, 10)`` draws."""
    values = np.atleast_2d(values)
    shape = values[:, 0:2]
    rate = values[:, 2:4].copy()
    slot = gamma_slot(w, d)
    if slot is not None:
        rate *= np.exp(values[:, [4 + slot, 7 + slot]])
    return shape, rate


def _probabilities(values, w, d, nu, marginal=False, n_nodes=incidence.N_NODES):
    shape, rate = arm_shape_rate(values, w, d)
    if marginal:
        return incidence.marginal_event_probabilities(incidence.WEIBULL, shape, rate, nu)
    return incidence.event_probabilities(incidence.WEIBULL, shape, rate, nu, n_nodes)


def event_probabilities(w: int, d: int, theta: ModelParams, nu: float = 1.0) -> np.ndarray:
    """P(E1..E5) for one parameter value."""
    return _probabilities(theta.as_array(), w, d, nu)[0]


def true_utility(w, d, theta: ModelParams, weights: UtilityWeights = DEFAULT_WEIGHTS, nu=1.0) -> float:
    return float(event_probabilities(w, d, theta, nu) @ weights.as_array())


def cumulative_incidence(k: int, w: int, d: int, theta: ModelParams, nu: float = 1.0) -> float:
    p = event_probabilities(w, d, theta, nu)
    return float(p[k - 1] + p[k + 1])


def draw_probabilities(draws: PosteriorDraws, w, d, nu=1.0, marginal=False, n_nodes=incidence.N_NODES):
    """Cached ``(n_draws, 5)`` outcome probabilities of arm ``(w, d)``."""
    key = ("probs", w, d, nu, marginal, n_nodes)
    if key not in draws.cache:
        if len(draws) == 0:
            raise ValueError("no posterior draws")
        draws.cache[key] = _probabilities(draws.values, w, d, nu, marginal, n_nodes)
    return draws.cache[key]


def draw_utilities(draws, w, d, weights=DEFAULT_WEIGHTS, nu=1.0, marginal=False):
    return draw_probabilities(draws, w, d, nu, marginal) @ weights.as_array()


def posterior_mean_utility(w, d, draws: PosteriorDraws, weights=DEFAULT_WEIGHTS, nu=1.0, marginal=False) -> float:
    if len(draws) == 0:
        raise ValueError("no posterior draws")
    return float(draw_utilities(draws, w, d, weights, nu, marginal).mean())


def exceedance_probabilities(w, d, draws, cfg: DesignConfig) -> tuple[float, float]:
    """Posterior Pr(CIR_k > tau_k) for both causes."""
    p = draw_probabilities(draws, w, d, cfg.nu, cfg.marginal)
    cir = p[:, 0:2] + p[:, 2:4]
    return tuple(float(np.mean(cir[:, k] > cfg.tau[k])) for k in range(2))


def admissible_set(w: int, draws: PosteriorDraws, cfg: DesignConfig) -> tuple[int, ...]:
    """Doses of subgroup ``w`` whose exceedance probabilities are both below ``q``."""
    keep = []
    for d in DOSES[w]:
        exceed = exceedance_probabilities(w, d, draws, cfg)
        if all(e < q for e, q in zip(exceed, cfg.q)):
            keep.append(d)
    return tuple(keep)


def randomization_probabilities(w, admissible, draws, cfg: DesignConfig) -> dict[int, float]:
    admissible = tuple(admissible)
    if not admissible:
        raise ValueError("cannot randomize over an empty admissible set")
    if len(admissible) == 1:
        return {admissible[0]: 1.0}
    if cfg.design == "er":
        return {d: 1.0 / len(admissible) for d in admissible}
    u = np.array([posterior_mean_utility(w, d, draws, cfg.weights, cfg.nu, cfg.marginal) for d in admissible])
    if u.sum() <= 0:
        return {d: 1.0 / len(admissible) for d in admissible}
    return {d: float(v) for d, v in zip(admissible, u / u.sum())}


def _challenger(w):
    # The non-standard dose of each subgroup.
    return HIGH if w == RE else LOW


def preference_probability(w, draws, cfg: DesignConfig) -> float:
    """Posterior Pr(U(challenger) > U(standard)) with per-draw utilities."""
    u_alt = draw_utilities(draws, w, _challenger(w), cfg.weights, cfg.nu, cfg.marginal)
    u_std = draw_utilities(draws, w, STANDARD, cfg.weights, cfg.nu, cfg.marginal)
    return float(np.mean(u_alt > u_std))


def final_selection(w, admissible, draws, cfg: DesignConfig) -> int | None:
    """Recommended dose for subgroup ``w`` at the end of the trial, or None."""
    admissible = tuple(admissible)
    if not admissible:
        return None
    if len(admissible) == 1:
        return admissible[0]
    return _challenger(w) if preference_probability(w, draws, cfg) > cfg.mu(w) else STANDARD


__all__ = [
    "DESIGNS", "DesignConfig", "UtilityWeights", "DEFAULT_WEIGHTS", "WEIGHT_PRESETS",
    "event_probabilities", "true_utility", "cumulative_incidence", "posterior_mean_utility",
    "admissible_set", "randomization_probabilities", "final_selection", "preference_probability",
    "exceedance_probabilities", "draw_probabilities", "draw_utilities", "arm_shape_rate",
]
