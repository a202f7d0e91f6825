"""Shared argument handling for the experiment scripts."""
import argparse
import time
from pathlib import Path

from frugal_ris.config import ScenarioConfig, load_config
from frugal_ris.harness import emit_csv, run_sweep

ROOT = Path(__file__).resolve().parents[1]


def parse(description):
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--config", default=str(ROOT / "configs" / "table1.toml"))
    ap.add_argument("--trials", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out-dir", default=str(ROOT / "results"))
    return ap.parse_args()


def load(args) -> ScenarioConfig:
    config = load_config(args.config)
    run = {}
    if args.trials is not None:
        run["trials"] = args.trials
    if args.seed is not None:
        run["seed"] = args.seed
    return config.replace(run=run)


def sweep_to_csv(config, experiment, out_dir, name=None, **kwargs):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    result = run_sweep(config, experiment, **kwargs)
    path = out / f"{name or experiment}.csv"
    emit_csv(result, path)
    print(f"{path}  ({time.perf_counter() - start:.1f} s)")
    for p in result.points:
        print(f"  {p.sweep_var}={p.value:g}  pos {p.rmse_pos_m:.3g} m (PEB {p.crb_pos_m:.3g})"
              f"  cfo {p.rmse_cfo_hz:.3g} Hz (CRB {p.crb_cfo_hz:.3g})")
    return result
