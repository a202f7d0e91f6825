"""False-alarm and detection rates of the GLRT for both NLoS estimators."""
from _common import load, parse, sweep_to_csv

if __name__ == "__main__":
    args = parse(__doc__)
    config = load(args)
    threshold = None
    for variant in ("ml", "lc"):
        cfg = config.replace(detector={"variant": variant})
        result = sweep_to_csv(cfg, "detect_power", args.out_dir, f"detect_{variant}",
                              threshold=threshold)
        threshold = result.threshold
        print(f"  threshold {threshold:.6g} W")
