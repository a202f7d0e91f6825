"""Position RMSE against CFO, with and without the CFO estimation step."""
from _common import load, parse, sweep_to_csv

if __name__ == "__main__":
    args = parse(__doc__)
    config = load(args)
    for estimator in ("los", "ml"):
        sweep_to_csv(config.replace(run={"estimator": estimator}), "cfo_sensitivity",
                     args.out_dir, f"cfo_{estimator}")
