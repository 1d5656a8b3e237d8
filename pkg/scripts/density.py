"""MountainCar x-position density per 20k-step window, RDD vs no bonus, 5 seeds.

    python scripts/density.py runs/density 100000
"""

import sys

from rddlab.harness.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "runs/density"
    steps = sys.argv[2] if len(sys.argv) > 2 else "100000"
    sys.exit(main(["density", "--steps", steps, "--seeds", "0,1,2,3,4", "--out", out]))
