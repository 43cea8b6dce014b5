"""Cause-specific Weibull hazard model for two competing events.

Cause 1 is disease progression (DP), cause 2 is normal tissue
complications (NC).  Subgroup ``w = 0`` is radiation-resistant (RE) and is
only ever treated at the standard or high dose; ``w = 1`` is
radiation-sensitive (SE) and is treated at the low or standard dose.

Parameter vectors are laid out in a fixed coordinate order, see
:data:`COORDINATES`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

RE, SE = 0, 1
LOW, STANDARD, HIGH = 0, 1, 2

DOSES = {RE: (STANDARD, HIGH), SE: (LOW, STANDARD)}
SUBGROUP_NAMES = {RE: "RE", SE: "SE"}
DOSE_NAMES = {LOW: "low", STANDARD: "standard", HIGH: "high"}
CAUSE_NAMES = {1: "DP", 2: "NC"}

COORDINATES = (
    "alpha1", "alpha2", "beta1", "beta2",
    "gamma11", "gamma12", "gamma13", "gamma21", "gamma22", "gamma23",
)

# (w, d) -> column of the cause's gamma triple that applies; None for the
# reference arm (SE, low).
_GAMMA_SLOT = {(SE, LOW): None, (SE, STANDARD): 0, (RE, STANDARD): 1, (RE, HIGH): 2}
ARMS = ((RE, STANDARD), (RE, HIGH), (SE, LOW), (SE, STANDARD))


class InvalidArmError(ValueError):
    """Raised for a (subgroup, dose) pair outside the subgroup's dose set."""


def check_arm(w: int, d: int) -> None:
    if w not in DOSES or d not in DOSES[w]:
        raise InvalidArmError(f"dose {d} is not available to subgroup w={w}")


def gamma_slot(w: int, d: int) -> int | None:
    check_arm(w, d)
    return _GAMMA_SLOT[(w, d)]


@dataclass(frozen=True)
class PatientRecord:
    """What the design is allowed to see about one patient."""

    w: int
    d: int
    x: float
    delta1: int = 0
    delta2: int = 0
    enroll_time: float = 0.0

    def __post_init__(self):
        check_arm(self.w, self.d)
        if self.delta1 not in (0, 1) or self.delta2 not in (0, 1):
            raise ValueError("event indicators must be 0 or 1")
        if self.delta1 + self.delta2 > 1:
            raise ValueError("at most one first event per patient")
        if not self.x > 0:
            raise ValueError(f"observation time must be positive, got {self.x}")


@dataclass(frozen=True)
class ModelParams:
    """Weibull shapes ``alpha``, rates ``beta`` and log hazard ratios ``gamma``.

    ``gamma[k]`` holds (standard vs low in SE, standard in RE, high in RE)
    for cause ``k + 1``.
    """

    alpha: tuple[float, float] = (1.0, 1.0)
    beta: tuple[float, float] = (1.0, 1.0)
    gamma: tuple[tuple[float, float, float], tuple[float, float, float]] = (
        (0.0, 0.0, 0.0),
        (0.0, 0.0, 0.0),
    )

    def as_array(self) -> np.ndarray:
        return np.array([*self.alpha, *self.beta, *self.gamma[0], *self.gamma[1]], dtype=float)

    @classmethod
    def from_array(cls, v: Sequence[float]) -> "ModelParams":
        v = [float(t) for t in v]
        if len(v) != len(COORDINATES):
            raise ValueError(f"expected {len(COORDINATES)} coordinates, got {len(v)}")
        return cls(
            alpha=(v[0], v[1]),
            beta=(v[2], v[3]),
            gamma=((v[4], v[5], v[6]), (v[7], v[8], v[9])),
        )

    def in_support(self) -> bool:
        return all(a > 0 for a in self.alpha) and all(b > 0 for b in self.beta)


@dataclass(frozen=True)
class PriorConfig:
    """Gamma(a, b) priors on alpha and beta, Normal(0, c^2) on gamma.

    The Gamma is in shape/scale form: mean ``a*b``, variance ``a*b**2``.
    """

    a: float = 1.0
    b: float = 1.0
    c: float = 10.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.c > 0):
            raise ValueError("prior hyperparameters must be strictly positive")


def log_hazard_ratio(k: int, w: int, d: int, theta: ModelParams) -> float:
    g = theta.gamma[k - 1]
    check_arm(w, d)
    return g[0] * d * w + (g[1] * (d == 1) + g[2] * (d == 2)) * (1 - w)


def hazard(k: int, x: float, w: int, d: int, theta: ModelParams) -> float:
    if not x > 0:
        raise ValueError("hazard is only defined for x > 0")
    a, b = theta.alpha[k - 1], theta.beta[k - 1]
    return a * b * x ** (a - 1) * math.exp(log_hazard_ratio(k, w, d, theta))


def survival(k: int, x: float, w: int, d: int, theta: ModelParams) -> float:
    if x < 0:
        raise ValueError("survival is only defined for x >= 0")
    a, b = theta.alpha[k - 1], theta.beta[k - 1]
    return math.exp(-b * x ** a * math.exp(log_hazard_ratio(k, w, d, theta)))


def _cause_terms(k, x, w, d, delta, theta):
    a, b = theta.alpha[k - 1], theta.beta[k - 1]
    g = theta.gamma[k - 1]
    h = g[0] * d * w + (g[1] * (d == 1) + g[2] * (d == 2)) * (1 - w)
    cumhaz = b * np.exp(h) * x ** a
    loghaz = math.log(a) + math.log(b) + (a - 1) * np.log(x) + h
    return np.sum(delta * loghaz - cumhaz)


def log_likelihood(data: Iterable[PatientRecord], theta: ModelParams) -> float:
    """Competing-risk log likelihood; a censored record only adds log S1 + log S2."""
    data = list(data)
    if not data:
        return 0.0
    w = np.array([p.w for p in data])
    d = np.array([p.d for p in data])
    x = np.array([p.x for p in data], dtype=float)
    d1 = np.array([p.delta1 for p in data])
    d2 = np.array([p.delta2 for p in data])
    return float(_cause_terms(1, x, w, d, d1, theta) + _cause_terms(2, x, w, d, d2, theta))


def _gamma_logpdf(v, a, b):
    return (a - 1) * math.log(v) - v / b - gammaln(a) - a * math.log(b)


def log_prior(theta: ModelParams, prior: PriorConfig) -> float:
    if not theta.in_support():
        return -math.inf
    lp = sum(_gamma_logpdf(v, prior.a, prior.b) for v in (*theta.alpha, *theta.beta))
    norm_const = -math.log(prior.c * math.sqrt(2 * math.pi))
    for g in (*theta.gamma[0], *theta.gamma[1]):
        lp += norm_const - 0.5 * (g / prior.c) ** 2
    return float(lp)


def log_posterior(data: Iterable[PatientRecord], theta: ModelParams, prior: PriorConfig) -> float:
    """Unnormalised log posterior density."""
    lp = log_prior(theta, prior)
    if lp == -math.inf:
        return lp
    return log_likelihood(data, theta) + lp
