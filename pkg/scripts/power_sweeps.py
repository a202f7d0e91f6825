"""RMSE against transmit power for the LoS, NLoS-ML and NLoS-LC estimators."""
from _common import load, parse, sweep_to_csv

if __name__ == "__main__":
    args = parse(__doc__)
    config = load(args)
    for experiment in ("los_power", "nlos_power_ml", "nlos_power_lc"):
        sweep_to_csv(config, experiment, args.out_dir)
