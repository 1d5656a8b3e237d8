"""Bonus-decay and random-walk traces on synthetic 2-D points (10 seeds each).

    python scripts/toy_traces.py runs/toy
"""

import sys

from rddlab.harness.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "runs/toy"
    seeds = ",".join(str(s) for s in range(10))
    code = main(["toy", "--mode", "decay", "--dim", "256", "--seeds", seeds, "--out", f"{out}/decay"])
    for sigma, n in (("0.8", "100"), ("0.4", "200")):
        code = code or main(["toy", "--mode", "walk", "--dim", "256", "--sigma", sigma, "--drnd-n", n,
                             "--seeds", seeds, "--out", f"{out}/walk_sigma{sigma}"])
    sys.exit(code)
