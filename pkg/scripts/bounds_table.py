"""PEB and CFO bounds against power for both hypotheses (no Monte Carlo)."""
import sys

from frugal_ris.cli import main

if __name__ == "__main__":
    sys.exit(main(["crb", *sys.argv[1:]]))
