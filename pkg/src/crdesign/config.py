"""Text formats: scenario files, design config files and trial-data tables.

Scenario and design files are INI-style.  A scenario file has a
``[scenario]`` section and one section per arm named ``RE-standard``,
``RE-high``, ``SE-low`` or ``SE-standard``::

    [scenario]
    name = scenario1
    family = weibull
    half_fraction = 0.5
    p_re = 0.5

    [RE-standard]
    cir_dp = 0.2
    cir_nc = 0.2

Calibration adds ``shape_dp``, ``rate_dp``, ``shape_nc``, ``rate_nc`` and
``residual`` to every arm section.  Floats are written with ``repr`` so a
file re-parses to exactly the same values.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import re
from dataclasses import fields

from .decision import DesignConfig, UtilityWeights
from .incidence import FAMILIES
from .model import DOSE_NAMES, PatientRecord, PriorConfig, SUBGROUP_NAMES, check_arm
from .sampler import Dataset, McmcConfig
from .scenarios import ArmGenerator, ScenarioSpec, reference_scenario


class ConfigError(ValueError):
    """Malformed input file; the message names the location."""


def _arm_names():
    out = {}
    for w, sname in SUBGROUP_NAMES.items():
        for d, dname in DOSE_NAMES.items():
            try:
                check_arm(w, d)
            except ValueError:
                continue
            out[f"{sname}-{dname}"] = (w, d)
    return out


ARM_NAMES = _arm_names()
ARM_SECTION = {arm: name for name, arm in ARM_NAMES.items()}


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    # Line number of every key, for diagnostics configparser cannot give.
    where, section = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            continue
        m = re.match(r"\s*([^#;=:\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            where[(section, m.group(1).strip().lower())] = i
    return where


class _Reader:
    def __init__(self, text: str, source: str):
        self.source = source
        self.lines = _key_lines(text)
        self.parser = configparser.ConfigParser(interpolation=None)
        try:
            self.parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None

    def where(self, section, key=None) -> str:
        line = self.lines.get((section, key)) if key else None
        loc = f"{self.source}:{line}" if line else self.source
        return f"{loc}: [{section}]" + (f" {key}" if key else "")

    def get(self, section, key, conv, default=None, required=False):
        if not self.parser.has_option(section, key):
            if required:
                raise ConfigError(f"{self.where(section)}: missing required field {key!r}")
            return default
        raw = self.parser.get(section, key)
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{self.where(section, key)}: bad value {raw!r} ({exc})") from None

    def check_keys(self, section, allowed):
        for key in self.parser.options(section):
            if key not in allowed:
                raise ConfigError(f"{self.where(section, key)}: unknown field")


def _float(raw):
    v = float(raw)
    if not math.isfinite(v):
        raise ValueError("not a finite number")
    return v


def _floats(raw):
    return tuple(_float(v) for v in re.split(r"[,\s]+", raw.strip()) if v)


def _int(raw):
    return int(raw.strip())


# -- scenarios ---------------------------------------------------------------

_SCENARIO_KEYS = {"name", "family", "half_fraction", "p_re", "nu"}
_ARM_KEYS = {"cir_dp", "cir_nc", "shape_dp", "rate_dp", "shape_nc", "rate_nc", "residual"}
_GEN_KEYS = ("shape_dp", "rate_dp", "shape_nc", "rate_nc")


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioSpec:
    r = _Reader(text, source)
    p = r.parser
    if not p.has_section("scenario"):
        raise ConfigError(f"{source}: missing [scenario] section")
    r.check_keys("scenario", _SCENARIO_KEYS)
    name = r.get("scenario", "name", str, "scenario")
    family = r.get("scenario", "family", lambda s: s.strip().lower(), "weibull")
    if family not in FAMILIES:
        raise ConfigError(f"{r.where('scenario', 'family')}: unknown family {family!r}; choose from {FAMILIES}")
    half = r.get("scenario", "half_fraction", _float, 0.5)
    p_re = r.get("scenario", "p_re", _float, 0.5)
    nu = r.get("scenario", "nu", _float, 1.0)

    targets, gens = {}, {}
    for section in p.sections():
        if section == "scenario":
            continue
        if section not in ARM_NAMES:
            raise ConfigError(f"{r.where(section)}: unknown arm; expected one of {sorted(ARM_NAMES)}")
        r.check_keys(section, _ARM_KEYS)
        arm = ARM_NAMES[section]
        targets[arm] = (r.get(section, "cir_dp", _float, required=True),
                        r.get(section, "cir_nc", _float, required=True))
        present = [k for k in _GEN_KEYS if p.has_option(section, k)]
        if present and len(present) != len(_GEN_KEYS):
            missing = sorted(set(_GEN_KEYS) - set(present))
            raise ConfigError(f"{r.where(section)}: incomplete calibration, missing {missing}")
        if present:
            v = {k: r.get(section, k, _float) for k in _GEN_KEYS}
            if v["shape_dp"] <= 0 or v["shape_nc"] <= 0 or v["rate_dp"] < 0 or v["rate_nc"] < 0:
                raise ConfigError(f"{r.where(section)}: calibrated shapes must be > 0 and rates >= 0")
            gens[arm] = ArmGenerator(family, (v["shape_dp"], v["shape_nc"]), (v["rate_dp"], v["rate_nc"]),
                                     r.get(section, "residual", _float, 0.0))
    if not targets:
        raise ConfigError(f"{source}: no arm sections")
    try:
        return ScenarioSpec(name=name, targets=targets, half_fraction=half, family=family, p_re=p_re, nu=nu,
                            generators=gens)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def format_scenario(spec: ScenarioSpec) -> str:
    p = configparser.ConfigParser(interpolation=None)
    p["scenario"] = {
        "name": spec.name,
        "family": spec.family,
        "half_fraction": repr(spec.half_fraction),
        "p_re": repr(spec.p_re),
        "nu": repr(spec.nu),
    }
    for arm in sorted(spec.targets):
        c1, c2 = spec.targets[arm]
        sec = {"cir_dp": repr(c1), "cir_nc": repr(c2)}
        gen = spec.generators.get(arm)
        if gen is not None:
            sec.update(shape_dp=repr(gen.shape[0]), rate_dp=repr(gen.rate[0]),
                       shape_nc=repr(gen.shape[1]), rate_nc=repr(gen.rate[1]), residual=repr(gen.residual))
        p[ARM_SECTION[arm]] = sec
    buf = io.StringIO()
    p.write(buf)
    return buf.getvalue()


def load_scenario(path: str) -> ScenarioSpec:
    """Read a scenario file; ``builtin:N`` names a built-in calibrated scenario."""
    m = re.fullmatch(r"builtin:([1-7])", path.strip())
    if m:
        return reference_scenario(int(m.group(1)))
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_scenario(text, path)


# -- design config -------------------------------------------------------------

_DESIGN_KEYS = {"nu", "n1", "cohort_size", "n_cohorts_total", "accrual_interval", "tau_dp", "tau_nc",
                "q_dp", "q_nc", "mu_re", "mu_se", "weights"}
_PRIOR_KEYS = {"a", "b", "c"}
_MCMC_KEYS = {"n_iter", "n_burn", "thin", "target_accept", "adapt_window"}


def parse_design(text: str, source: str = "<design>") -> DesignConfig:
    """Build a :class:`DesignConfig` from ``[design]``, ``[prior]`` and ``[mcmc]`` sections.

    Missing sections and fields keep their defaults.
    """
    r = _Reader(text, source)
    p = r.parser
    for section in p.sections():
        if section not in ("design", "prior", "mcmc"):
            raise ConfigError(f"{r.where(section)}: unknown section")
    base = DesignConfig()
    kw = {}
    if p.has_section("design"):
        r.check_keys("design", _DESIGN_KEYS)
        for key, conv in (("nu", _float), ("n1", _int), ("cohort_size", _int), ("n_cohorts_total", _int),
                          ("accrual_interval", _float)):
            if p.has_option("design", key):
                kw[key] = r.get("design", key, conv)
        kw["tau"] = (r.get("design", "tau_dp", _float, base.tau[0]), r.get("design", "tau_nc", _float, base.tau[1]))
        kw["q"] = (r.get("design", "q_dp", _float, base.q[0]), r.get("design", "q_nc", _float, base.q[1]))
        kw["mu0"] = r.get("design", "mu_re", _float, base.mu0)
        kw["mu1"] = r.get("design", "mu_se", _float, base.mu1)
        if p.has_option("design", "weights"):
            kw["weights"] = r.get("design", "weights", lambda s: UtilityWeights(_floats(s)))
    if p.has_section("prior"):
        r.check_keys("prior", _PRIOR_KEYS)
        kw["prior"] = _build(r, PriorConfig, {k: r.get("prior", k, _float) for k in _PRIOR_KEYS
                                              if p.has_option("prior", k)}, "prior")
    if p.has_section("mcmc"):
        r.check_keys("mcmc", _MCMC_KEYS)
        conv = {"n_iter": _int, "n_burn": _int, "thin": _int, "target_accept": _float, "adapt_window": _int}
        kw["mcmc"] = _build(r, McmcConfig, {k: r.get("mcmc", k, conv[k]) for k in _MCMC_KEYS
                                            if p.has_option("mcmc", k)}, "mcmc")
    return _build(r, DesignConfig, kw, "design")


def _build(r, cls, kw, section):
    try:
        return cls(**kw)
    except ValueError as exc:
        raise ConfigError(f"{r.where(section)}: {exc}") from None


def format_design(cfg: DesignConfig) -> str:
    p = configparser.ConfigParser(interpolation=None)
    p["design"] = {
        "nu": repr(cfg.nu), "n1": str(cfg.n1), "cohort_size": str(cfg.cohort_size),
        "n_cohorts_total": str(cfg.n_cohorts_total), "accrual_interval": repr(cfg.accrual_interval),
        "tau_dp": repr(cfg.tau[0]), "tau_nc": repr(cfg.tau[1]), "q_dp": repr(cfg.q[0]), "q_nc": repr(cfg.q[1]),
        "mu_re": repr(cfg.mu0), "mu_se": repr(cfg.mu1),
        "weights": ", ".join(repr(float(v)) for v in cfg.weights.o),
    }
    p["prior"] = {f.name: repr(getattr(cfg.prior, f.name)) for f in fields(cfg.prior)}
    p["mcmc"] = {k: repr(getattr(cfg.mcmc, k)) for k in sorted(_MCMC_KEYS)}
    buf = io.StringIO()
    p.write(buf)
    return buf.getvalue()


def load_design(path: str | None) -> DesignConfig:
    if path is None:
        return DesignConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_design(text, path)


# -- trial data ----------------------------------------------------------------

TRIAL_COLUMNS = ("w", "d", "x", "delta1", "delta2")


def parse_trial_data(text: str, source: str = "<data>") -> list[PatientRecord]:
    """Comma-separated patient records with header ``w,d,x,delta1,delta2[,enroll_time]``.

    Row numbers in error messages count the header as row 1.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ConfigError(f"{source}: empty file") from None
    missing = [c for c in TRIAL_COLUMNS if c not in header]
    if missing:
        raise ConfigError(f"{source}: header lacks columns {missing}")
    idx = {c: header.index(c) for c in header}
    records = []
    for row_no, row in enumerate(reader, 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ConfigError(f"{source}: row {row_no}: expected {len(header)} fields, got {len(row)}")
        try:
            rec = PatientRecord(
                w=int(row[idx["w"]]),
                d=int(row[idx["d"]]),
                x=float(row[idx["x"]]),
                delta1=int(row[idx["delta1"]]),
                delta2=int(row[idx["delta2"]]),
                enroll_time=float(row[idx["enroll_time"]]) if "enroll_time" in idx else 0.0,
            )
        except ValueError as exc:
            raise ConfigError(f"{source}: row {row_no}: {exc}") from None
        records.append(rec)
    return records


def format_trial_data(records) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(TRIAL_COLUMNS + ("enroll_time",))
    for r in records:
        out.writerow([r.w, r.d, repr(float(r.x)), r.delta1, r.delta2, repr(float(r.enroll_time))])
    return buf.getvalue()


def load_trial_data(path: str) -> Dataset:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return Dataset.from_records(parse_trial_data(text, path))
