"""Position RMSE against the Rician factor at fixed power."""
from _common import load, parse, sweep_to_csv

if __name__ == "__main__":
    args = parse(__doc__)
    config = load(args)
    for estimator in ("los", "ml", "lc"):
        sweep_to_csv(config.replace(run={"estimator": estimator}), "kappa", args.out_dir,
                     f"kappa_{estimator}")
