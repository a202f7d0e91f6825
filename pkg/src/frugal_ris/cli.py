"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .bounds import IdentifiabilityError, compute_bounds
from .channel import SignalModel, fspl_gains, make_schedule, synthesize
from .config import ConfigError, ScenarioConfig, load_config
from .estimation import ESTIMATORS, build_searches
from .harness import EXPERIMENTS, emit_csv, run_sweep
from .localization import position_from_estimate


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _powers(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file (sections mirror ScenarioConfig)")
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--power-dbm", type=_powers, help="comma-separated transmit powers")
    common.add_argument("--fixed-profiles", action="store_true",
                        help="reuse trial 0's RIS profiles in every trial")

    parser = _Parser(prog="frugal-ris", description="RIS-aided localisation experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="one trial, estimates as JSON")
    sweep = sub.add_parser("sweep", parents=[common], help="Monte-Carlo sweep to CSV")
    sweep.add_argument("experiment", choices=EXPERIMENTS)
    sub.add_parser("crb", parents=[common], help="bounds only, LoS and NLoS")
    sub.add_parser("detect", parents=[common], help="threshold calibration and detection sweep")
    return parser


def _config(args) -> ScenarioConfig:
    config = load_config(args.config) if args.config else ScenarioConfig()
    run = {}
    if args.seed is not None:
        run["seed"] = args.seed
    if args.trials is not None:
        run["trials"] = args.trials
    if args.power_dbm:
        run["powers_dbm"] = args.power_dbm
    if args.fixed_profiles:
        run["fixed_profiles"] = True
    return config.replace(run=run) if run else config


def _open_out(path):
    return open(path, "w", newline="", encoding="ascii") if path else None


def _write(text: str, path):
    fh = _open_out(path)
    if fh is None:
        sys.stdout.write(text)
        return
    with fh:
        fh.write(text)


def cmd_simulate(config: ScenarioConfig, out):
    run = config.run
    scenario = config.scenario.with_power(run.powers_dbm[0])
    rng = np.random.default_rng([run.seed, 0])
    schedule = make_schedule(scenario, rng, run.base_kind)
    model = SignalModel(scenario, schedule)
    los = run.estimator == "los"
    obs = synthesize(scenario, schedule, run.cfo_hz, los, rng, model=model)
    est = ESTIMATORS[run.estimator](obs.y, model, config.grid, build_searches(model, config.grid))
    pos = position_from_estimate(est, scenario)
    report = {
        "power_dbm": scenario.power_dbm,
        "estimator": run.estimator,
        "truth": {"nu_hz": obs.nu, "aod_rad": obs.aods.tolist(), "position_m": list(scenario.ue)},
        "estimate": {"nu_hz": est.nu, "aod_rad": est.angles.tolist(),
                     "position_m": pos.position.tolist(), "residual": est.residual,
                     "hypothesis": est.hypothesis},
        "position_error_m": float(np.linalg.norm(pos.position - np.array(scenario.ue))),
        "conditioning": pos.conditioning,
    }
    _write(json.dumps(report, indent=2) + "\n", out)


def cmd_crb(config: ScenarioConfig, out):
    run = config.run
    n = config.scenario.n_ris
    header = ["hypothesis", "power_dbm", "peb_m", "crb_cfo_hz"]
    header += [f"crb_aod{r + 1}_{c}_deg" for r in range(n) for c in ("az", "el")]
    rows = []
    for p in run.powers_dbm:
        scenario = config.scenario.with_power(p)
        rng = np.random.default_rng([run.seed, 0])
        model = SignalModel(scenario, make_schedule(scenario, rng, run.base_kind))
        gains = fspl_gains(scenario, rng)
        for los in (True, False):
            name = "los" if los else "nlos"
            try:
                b = compute_bounds(model, run.cfo_hz, gains, los)
                values = [b.peb, b.cfo, *np.rad2deg(b.aod).ravel()]
            except IdentifiabilityError:
                values = [float("nan")] * (2 + 2 * n)
            rows.append([name, format(p, ".12g")] + [format(v, ".12g") for v in values])
    fh = _open_out(out) or sys.stdout
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    if fh is not sys.stdout:
        fh.close()


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        if args.command == "simulate":
            cmd_simulate(config, args.out)
        elif args.command == "crb":
            cmd_crb(config, args.out)
        else:
            experiment = "detect_power" if args.command == "detect" else args.experiment
            result = run_sweep(config, experiment)
            if result.threshold is not None:
                print(f"threshold: {result.threshold:.12g}", file=sys.stderr)
            emit_csv(result, args.out or sys.stdout)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and map to exit code 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
