"""Scenario definitions and calibration of the data-generating arms.

Each arm (subgroup, dose) is given target cumulative incidence rates for
DP and NC over the follow-up window.  A pair of independent latent event
times, one per cause, is calibrated so that the competing-risk incidence
of each cause hits its target at ``nu`` and a fixed fraction of it
(``half_fraction``) is reached by ``nu / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from . import incidence
from .incidence import LOGLOGISTIC, WEIBULL
from .model import HIGH, LOW, RE, SE, STANDARD, PatientRecord, check_arm

CALIBRATION_TOL = 1e-6


class CalibrationError(RuntimeError):
    def __init__(self, message, residual=math.nan):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class ArmGenerator:
    """Latent-time distributions of one arm, per cause ``(shape, rate)``.

    A cause with ``rate == 0`` never happens.
    """

    family: str
    shape: tuple[float, float]
    rate: tuple[float, float]
    residual: float = 0.0

    def __post_init__(self):
        if self.family not in incidence.FAMILIES:
            raise ValueError(f"unknown generator family {self.family!r}")

    def incidence(self, lo, hi, n_nodes=incidence.N_NODES):
        """Cause-specific incidence over ``[lo, hi]`` as a length-2 array."""
        return incidence.incidence_between(self.family, self.shape, self.rate, lo, hi, n_nodes)[0]

    def event_probabilities(self, nu=1.0):
        return incidence.event_probabilities(self.family, self.shape, self.rate, nu)[0]

    def latent_times(self, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF transform of uniforms ``u`` (..., 2) into latent times."""
        u = np.asarray(u, dtype=float)
        shape = np.asarray(self.shape)
        rate = np.asarray(self.rate)
        with np.errstate(divide="ignore"):
            if self.family == WEIBULL:
                cumrate = -np.log(u)
            else:
                cumrate = 1.0 / u - 1.0
            t = (cumrate / rate) ** (1.0 / shape)
        return np.where(rate > 0, t, np.inf)


@dataclass
class ScenarioSpec:
    """Target incidences per arm plus, once calibrated, the generators.

    ``targets`` maps ``(w, d)`` to ``(cir_dp, cir_nc)``.
    """

    name: str
    targets: dict[tuple[int, int], tuple[float, float]]
    half_fraction: float = 0.5
    family: str = WEIBULL
    p_re: float = 0.5
    nu: float = 1.0
    generators: dict[tuple[int, int], ArmGenerator] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in incidence.FAMILIES:
            raise ValueError(f"unknown generator family {self.family!r}")
        if not 0.0 <= self.p_re <= 1.0:
            raise ValueError("p_re must be in [0, 1]")
        for arm, (c1, c2) in self.targets.items():
            check_arm(*arm)
            check_targets(c1, c2, label=arm_label(arm))

    @property
    def calibrated(self) -> bool:
        return all(arm in self.generators for arm in self.targets)

    def generator(self, w, d) -> ArmGenerator:
        try:
            return self.generators[(w, d)]
        except KeyError:
            raise KeyError(f"scenario {self.name!r} has no calibrated arm {arm_label((w, d))}") from None

    def with_family(self, family: str) -> "ScenarioSpec":
        return replace(self, family=family, generators={})

    def with_p_re(self, p_re: float) -> "ScenarioSpec":
        return replace(self, p_re=p_re)


def arm_label(arm) -> str:
    w, d = arm
    return f"{'RE' if w == RE else 'SE'}-{['low', 'standard', 'high'][d]}"


def check_targets(c1, c2, label="arm"):
    if not (0.0 <= c1 < 1.0 and 0.0 <= c2 < 1.0):
        raise ValueError(f"{label}: incidence targets must lie in [0, 1), got ({c1}, {c2})")
    if c1 + c2 >= 1.0:
        raise ValueError(f"{label}: infeasible targets, CIR_DP + CIR_NC = {c1 + c2:g} >= 1")


def _initial_guess(family, c, f, nu):
    # Each cause on its own, ignoring competition.
    if family == WEIBULL:
        full, half = -math.log1p(-c), -math.log1p(-f * c)
    else:
        full, half = c / (1 - c), f * c / (1 - f * c)
    shape = math.log(full / half) / math.log(2.0)
    return math.log(shape), math.log(full) - shape * math.log(nu)


def calibrate_arm(targets, half_fraction=0.5, family=WEIBULL, nu=1.0, tol=CALIBRATION_TOL) -> ArmGenerator:
    """Solve for per-cause (shape, rate) hitting the incidence targets.

    Unknowns are the logs of shape and rate for each cause with a nonzero
    target; the equations are the incidence at ``nu`` and at ``nu / 2``.
    """
    c = tuple(float(v) for v in targets)
    check_targets(*c)
    if not 0.0 < half_fraction < 1.0:
        raise ValueError("half_fraction must be in (0, 1)")
    active = [k for k in range(2) if c[k] > 0]
    if not active:
        return ArmGenerator(family, (1.0, 1.0), (0.0, 0.0), 0.0)
    target = np.array([c[k] for k in active] + [half_fraction * c[k] for k in active])

    def unpack(z):
        shape, rate = [1.0, 1.0], [0.0, 0.0]
        for j, k in enumerate(active):
            shape[k] = math.exp(z[2 * j])
            rate[k] = math.exp(z[2 * j + 1])
        return shape, rate

    def residual(z):
        shape, rate = unpack(z)
        half = incidence.incidence_between(family, shape, rate, 0.0, nu / 2)[0]
        full = half + incidence.incidence_between(family, shape, rate, nu / 2, nu)[0]
        return np.concatenate([full[active], half[active]]) - target

    z0 = np.concatenate([_initial_guess(family, c[k], half_fraction, nu) for k in active])
    best = None
    for method in ("hybr", "lm"):
        sol = optimize.root(residual, z0, method=method, tol=1e-14)
        err = float(np.max(np.abs(residual(sol.x))))
        if best is None or err < best[1]:
            best = (sol.x, err)
        if err < tol:
            break
    z, err = best
    if not err < tol:
        raise CalibrationError(
            f"calibration did not converge for targets {c} (half_fraction={half_fraction}, "
            f"family={family}); max residual {err:.3g}",
            residual=err,
        )
    shape, rate = unpack(z)
    return ArmGenerator(family, tuple(shape), tuple(rate), err)


def calibrate(scenario: ScenarioSpec) -> ScenarioSpec:
    gens = {
        arm: calibrate_arm(tgt, scenario.half_fraction, scenario.family, scenario.nu)
        for arm, tgt in scenario.targets.items()
    }
    return replace(scenario, generators=gens)


def _table(rows):
    # rows: RE standard, RE high, SE low, SE standard
    return dict(zip(((RE, STANDARD), (RE, HIGH), (SE, LOW), (SE, STANDARD)), rows))


REFERENCE_TARGETS = {
    1: _table([(0.2, 0.2), (0.1, 0.3), (0.3, 0.1), (0.2, 0.2)]),
    2: _table([(0.3, 0.1), (0.05, 0.2), (0.25, 0.2), (0.1, 0.3)]),
    3: _table([(0.3, 0.1), (0.2, 0.6), (0.6, 0.1), (0.2, 0.6)]),
    4: _table([(0.3, 0.1), (0.2, 0.6), (0.25, 0.1), (0.2, 0.6)]),
    5: _table([(0.3, 0.1), (0.05, 0.2), (0.6, 0.1), (0.2, 0.2)]),
    6: _table([(0.5, 0.1), (0.1, 0.15), (0.1, 0.05), (0.08, 0.35)]),
    7: _table([(0.15, 0.1), (0.1, 0.15), (0.5, 0.05), (0.1, 0.35)]),
}

# Reference true utilities under the default weights, same arm order as the targets.
REFERENCE_UTILITIES = {
    1: _table([63.5, 64.3, 62.8, 63.6]),
    2: _table([62.8, 77.7, 58.8, 64.2]),
    3: _table([62.3, 29.6, 34.7, 29.6]),
    4: _table([62.5, 29.8, 67.3, 29.8]),
    5: _table([62.6, 77.7, 35.2, 63.4]),
    6: _table([44.3, 77.3, 86.0, 61.8]),
    7: _table([77.3, 77.0, 48.4, 60.0]),
}


def reference_scenario(number: int, family: str = WEIBULL, p_re: float = 0.5, calibrated: bool = True) -> ScenarioSpec:
    spec = ScenarioSpec(
        name=f"scenario{number}",
        targets=dict(REFERENCE_TARGETS[number]),
        family=family,
        p_re=p_re,
    )
    return calibrate(spec) if calibrated else spec




# -- virtual patients -------------------------------------------------------


@dataclass(frozen=True)
class LatentPatient:
    """A simulated patient including the event time the design must not see."""

    w: int
    d: int
    enroll_time: float
    event_time: float
    cause: int  # 1 or 2; 0 when no event ever happens

    def observe(self, censor_time: float):
        """Record as seen after ``censor_time`` units of follow-up."""
        if self.event_time <= censor_time:
            return PatientRecord(self.w, self.d, self.event_time, int(self.cause == 1),
                                 int(self.cause == 2), self.enroll_time)
        return PatientRecord(self.w, self.d, censor_time, 0, 0, self.enroll_time)


def latent_from_uniforms(generator: ArmGenerator, w, d, u, enroll_time=0.0) -> LatentPatient:
    y = generator.latent_times(u)
    if not np.any(np.isfinite(y)):
        return LatentPatient(w, d, enroll_time, math.inf, 0)
    k = int(np.argmin(y))
    return LatentPatient(w, d, enroll_time, float(y[k]), k + 1)


def generate_patient(generator: ArmGenerator, w, d, rng: np.random.Generator, enroll_time=0.0) -> LatentPatient:
    """Draw independent latent DP and NC times; the first one is observed."""
    return latent_from_uniforms(generator, w, d, rng.random(2), enroll_time)


@dataclass(frozen=True)
class Arrival:
    w: int
    u: tuple[float, float]


class PatientStream:
    """Arriving patients of a scenario: subgroup plus the uniforms fixing their outcome.

    Outcomes are a deterministic function of the arrival and the dose it is
    eventually given, so two designs fed the same stream see the same people.
    """

    def __init__(self, scenario: ScenarioSpec, rng: np.random.Generator):
        if not scenario.calibrated:
            raise ValueError(f"scenario {scenario.name!r} is not calibrated")
        self.scenario = scenario
        self.rng = rng

    def next(self) -> Arrival:
        r = self.rng.random(3)
        w = RE if r[0] < self.scenario.p_re else SE
        return Arrival(w, (float(r[1]), float(r[2])))

    def realize(self, arrival: Arrival, d: int, enroll_time: float) -> LatentPatient:
        gen = self.scenario.generator(arrival.w, d)
        return latent_from_uniforms(gen, arrival.w, d, np.array(arrival.u), enroll_time)
