"""Command-line front end.

Exit status: 0 success, 2 bad input (usage, parse, infeasible targets),
3 calibration failure or an uncalibrated scenario, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, decision
from .config import ConfigError, format_design, format_scenario, load_design, load_scenario, load_trial_data
from .decision import DESIGNS, WEIGHT_PRESETS
from .model import DOSE_NAMES, DOSES, RE, SE, SUBGROUP_NAMES
from .sampler import effective_sample_size
from .scenarios import CalibrationError, calibrate, check_targets, arm_label
from .simulation import ARMS, AXES, default_workers, run_replicates, sensitivity_sweep
from .trial import analyze

EXIT_OK, EXIT_PARSE, EXIT_CALIBRATION, EXIT_RUNTIME = 0, 2, 3, 4

OC_COLUMNS = ("design", "scenario", "subgroup", "dose", "selection_pct", "mean_n_treated", "mean_dp", "mean_nc",
              "early_stop_pct", "n_reps", "seed")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def _csv(rows, columns) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(columns)
    for row in rows:
        out.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode() if isinstance(p, str) else p)
        h.update(b"\0")
    return h.hexdigest()


class _Outputs:
    """Collects output files and writes the run manifest next to the first one."""

    def __init__(self, command, config_digest, seed):
        self.manifest = {
            "command": command,
            "config_digest": config_digest,
            "seed": seed,
            "version": __version__,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "outputs": [],
        }
        self.first = None

    def manifest_name(self, path: Path) -> str:
        return (self.first or path).name + ".manifest.json"

    def write(self, path, text: str, comment=True):
        path = Path(path)
        if self.first is None:
            self.first = path
        if comment:
            text = f"# manifest={self.manifest_name(path)} config_digest={self.manifest['config_digest']}\n" + text
        path.write_text(text, encoding="utf-8")
        self.manifest["outputs"].append({"path": str(path), "sha256": _digest(text.encode())[:64]})

    def close(self):
        if self.first is None:
            return
        self.manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        path = self.first.with_name(self.manifest_name(self.first))
        path.write_text(json.dumps(self.manifest, indent=2) + "\n", encoding="utf-8")


def _emit(outputs, out, text):
    if out:
        outputs.write(out, text)
    else:
        sys.stdout.write(text)


def _progress(label):
    last = [0.0]

    def report(done, total):
        now = time.monotonic()
        if done == total or now - last[0] > 2.0:
            last[0] = now
            print(f"{label}: {done}/{total} replicates", file=sys.stderr, flush=True)

    return report


def _scenario(path, need_calibrated=True):
    spec = load_scenario(path)
    if need_calibrated and not spec.calibrated:
        missing = [arm_label(a) for a in sorted(spec.targets) if a not in spec.generators]
        raise CliError(f"scenario {spec.name!r} is not calibrated (arms {missing}); "
                       f"run 'crdesign calibrate --scenario {path} --out FILE' first", EXIT_CALIBRATION)
    if need_calibrated:
        absent = [arm_label(a) for a in ARMS if a not in spec.targets]
        if absent:
            raise ConfigError(f"{path}: scenario lacks arms {absent}")
    return spec


def _positive_reps(n):
    if n < 1:
        raise CliError(f"--reps must be at least 1, got {n}", EXIT_PARSE)


# -- commands -------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    spec = load_scenario(args.scenario)
    for arm, (c1, c2) in spec.targets.items():
        check_targets(c1, c2, label=arm_label(arm))
    try:
        spec = calibrate(replace(spec, generators={}))
    except CalibrationError as exc:
        raise CliError(f"calibration failed: {exc}", EXIT_CALIBRATION) from None
    for arm in sorted(spec.generators):
        g = spec.generators[arm]
        print(f"{arm_label(arm)}: shape=({g.shape[0]:.6g}, {g.shape[1]:.6g}) rate=({g.rate[0]:.6g}, "
              f"{g.rate[1]:.6g}) residual={g.residual:.3g}", file=sys.stderr)
    text = format_scenario(spec)
    outputs = _Outputs("calibrate", _digest(text), None)
    if args.out:
        outputs.write(args.out, text)
        outputs.close()
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    _positive_reps(args.reps)
    spec = _scenario(args.scenario)
    cfg = load_design(args.config)
    oc = run_replicates(spec, args.design, cfg, args.reps, args.seed, args.workers,
                        progress=_progress(f"{spec.name}/{args.design}"))
    if oc.n_failed:
        print(f"warning: {oc.n_failed} replicate(s) failed and were excluded", file=sys.stderr)
        for seed, msg in oc.failures[:5]:
            print(f"  seed {seed}: {msg}", file=sys.stderr)
    text = _csv(oc.rows(), OC_COLUMNS)
    digest = _digest("simulate", format_scenario(spec), format_design(cfg), args.design, str(args.reps))
    outputs = _Outputs("simulate", digest, args.seed)
    _emit(outputs, args.out, text)
    outputs.close()
    return EXIT_RUNTIME if oc.n_failed else EXIT_OK


def cmd_conduct(args) -> int:
    cfg = replace(load_design(args.config), design=args.design)
    data = load_trial_data(args.data)
    need = cfg.n1 * cfg.cohort_size
    if len(data) < need:
        raise CliError(f"{args.data}: {len(data)} records, but the {cfg.n1} equal-randomization cohorts "
                       f"alone hold {need}", EXIT_PARSE)
    result = analyze(data, cfg, args.seed, (RE, SE), final=args.final)
    rows = []
    for w in (RE, SE):
        selected = decision.final_selection(w, result.admissible[w], result.draws, cfg) if args.final else None
        for d in DOSES[w]:
            u = decision.draw_utilities(result.draws, w, d, cfg.weights, cfg.nu, cfg.marginal)
            ess = effective_sample_size(u)
            row = {
                "subgroup": SUBGROUP_NAMES[w],
                "dose": DOSE_NAMES[d],
                "admissible": d in result.admissible[w],
                "utility": result.utilities[w][d],
                "utility_mcse": float(np.std(u, ddof=1) / np.sqrt(ess)) if len(u) > 1 else float("nan"),
                "randomization": result.probabilities[w].get(d, 0.0),
            }
            if args.final:
                row["selected"] = selected == d
            rows.append(row)
    columns = ["subgroup", "dose", "admissible", "utility", "utility_mcse", "randomization"]
    if args.final:
        columns.append("selected")
    text = _csv(rows, columns)
    digest = _digest("conduct", Path(args.data).read_bytes(), format_design(cfg), str(args.final))
    outputs = _Outputs("conduct", digest, args.seed)
    _emit(outputs, args.out, text)
    outputs.close()
    return EXIT_OK


def parse_grid(axis: str, text: str) -> list:
    """``a:b:step`` ranges or comma lists; ``presets`` for all weight rows."""
    text = text.strip()
    if axis == "generator_family":
        return [v.strip().lower() for v in text.split(",") if v.strip()]
    if axis == "weights":
        if text.lower() == "presets":
            return list(range(1, len(WEIGHT_PRESETS) + 1))
        out = []
        for item in text.split(";" if ";" in text or "/" in text else ","):
            item = item.strip()
            out.append(tuple(float(v) for v in item.split("/")) if "/" in item else int(item))
        return out
    if ":" in text:
        parts = [float(v) for v in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(f"range grid must be start:stop:step with step > 0, got {text!r}")
        start, stop, step = parts
        vals = list(np.arange(start, stop + step / 2, step))
    else:
        vals = [float(v) for v in text.split(",") if v.strip()]
    if axis == "sample_size":
        return [int(round(v)) for v in vals]
    return [round(float(v), 12) for v in vals]


def _sweep_rows(axis, sweep):
    rows = []
    for value, oc in sweep:
        row = {"axis": axis, "value": value if not isinstance(value, tuple) else "/".join(_fmt(v) for v in value),
               "design": oc.design, "scenario": oc.scenario, "n_reps": oc.n_reps, "seed": oc.seed}
        total = sum(oc.mean_treated.values())
        for w in (RE, SE):
            g = SUBGROUP_NAMES[w]
            row[f"early_stop_pct_{g}"] = 100.0 * oc.early_stop[w]
            row[f"none_pct_{g}"] = 100.0 * oc.none_selected[w]
            for d in DOSES[w]:
                arm = f"{g}_{DOSE_NAMES[d]}"
                row[f"selection_pct_{arm}"] = 100.0 * oc.selection[(w, d)]
                row[f"mean_n_treated_{arm}"] = oc.mean_treated[(w, d)]
                row[f"allocation_pct_{arm}"] = 100.0 * oc.mean_treated[(w, d)] / total if total else 0.0
                row[f"mean_dp_{arm}"] = oc.mean_dp[(w, d)]
                row[f"mean_nc_{arm}"] = oc.mean_nc[(w, d)]
        rows.append(row)
    return rows


def _plot_data(rows) -> str:
    # Two columns per series: x_<series>, y_<series>.
    series = [c for c in rows[0] if c.startswith(("selection_pct_", "allocation_pct_"))]
    columns = [f"{p}_{s}" for s in series for p in ("x", "y")]
    table = [{**{f"x_{s}": r["value"] for s in series}, **{f"y_{s}": r[s] for s in series}} for r in rows]
    return _csv(table, columns)


def cmd_sensitivity(args) -> int:
    _positive_reps(args.reps)
    if args.axis not in AXES:
        raise CliError(f"unknown axis {args.axis!r}; choose from {', '.join(AXES)}", EXIT_PARSE)
    try:
        grid = parse_grid(args.axis, args.grid)
    except ValueError as exc:
        raise CliError(f"bad --grid for axis {args.axis}: {exc}", EXIT_PARSE) from None
    spec = _scenario(args.scenario)
    cfg = load_design(args.config)

    def progress(value, done, total):
        if done == total or done % max(1, total // 10) == 0:
            print(f"{args.axis}={value}: {done}/{total} replicates", file=sys.stderr, flush=True)

    try:
        sweep = sensitivity_sweep(spec, args.design, cfg, args.axis, grid, args.reps, args.seed, args.workers,
                                  progress=progress)
    except ValueError as exc:
        raise CliError(f"invalid grid for axis {args.axis}: {exc}", EXIT_PARSE) from None
    except CalibrationError as exc:
        raise CliError(f"calibration failed: {exc}", EXIT_CALIBRATION) from None
    rows = _sweep_rows(args.axis, sweep)
    columns = list(rows[0])
    text = _csv(rows, columns)
    digest = _digest("sensitivity", format_scenario(spec), format_design(cfg), args.design, args.axis,
                     repr(grid), str(args.reps))
    outputs = _Outputs("sensitivity", digest, args.seed)
    _emit(outputs, args.out, text)
    plot = _plot_data(rows)
    if args.plot_data:
        outputs.write(args.plot_data, plot)
    elif args.out:
        outputs.write(Path(args.out).with_suffix(".plot.csv"), plot)
    outputs.close()
    failed = sum(oc.n_failed for _, oc in sweep)
    return EXIT_RUNTIME if failed else EXIT_OK


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crdesign", description="Competing-risk adaptive dose-finding design simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", required=True, help="scenario file, or builtin:N for a built-in scenario")
        sp.add_argument("--out", help="output file (default: standard output)")

    def sim_flags(sp):
        sp.add_argument("--config", help="design config file (defaults apply when omitted)")
        sp.add_argument("--design", choices=DESIGNS, default="ar")
        sp.add_argument("--reps", type=int, default=500)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=int, default=default_workers(),
                        help="worker processes (default: available CPUs)")

    sp = sub.add_parser("calibrate", help="calibrate the data-generating arms of a scenario")
    common(sp)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("simulate", help="operating characteristics over replicate trials")
    common(sp)
    sim_flags(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("conduct", help="interim or final decisions for observed trial data")
    sp.add_argument("data", help="CSV with columns w,d,x,delta1,delta2[,enroll_time]")
    sp.add_argument("--config", help="design config file")
    sp.add_argument("--design", choices=DESIGNS, default="ar")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--final", action="store_true", help="also report the final dose selection")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_conduct)

    sp = sub.add_parser("sensitivity", help="operating characteristics along one design axis")
    common(sp)
    sim_flags(sp)
    sp.add_argument("--axis", required=True, help=f"one of {', '.join(AXES)}")
    sp.add_argument("--grid", required=True,
                    help="start:stop:step or a comma list; 'presets' or row numbers for weights")
    sp.add_argument("--plot-data", help="plot-data file (default: <out>.plot.csv)")
    sp.set_defaults(func=cmd_sensitivity)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except CalibrationError as exc:
        print(f"error: calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
