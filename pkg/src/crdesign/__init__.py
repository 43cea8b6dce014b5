"""Bayesian competing-risk adaptive dose-finding design for two biomarker subgroups."""

__version__ = "0.1.0"

from .decision import DesignConfig, UtilityWeights, true_utility  # noqa: E402
from .model import ModelParams, PatientRecord, PriorConfig  # noqa: E402
from .sampler import McmcConfig, sample_posterior  # noqa: E402
from .scenarios import ScenarioSpec, calibrate, calibrate_arm, reference_scenario  # noqa: E402
from .simulation import OperatingCharacteristics, run_replicates, sensitivity_sweep  # noqa: E402
from .trial import run_trial  # noqa: E402

__all__ = [
    "DesignConfig", "UtilityWeights", "true_utility", "ModelParams", "PatientRecord", "PriorConfig",
    "McmcConfig", "sample_posterior", "ScenarioSpec", "calibrate", "calibrate_arm", "reference_scenario",
    "OperatingCharacteristics", "run_replicates", "sensitivity_sweep", "run_trial",
]
