"""Sweep the target mean, the target spread and the output dimension on the chain.

    python scripts/ablations.py runs/ablate
"""

import sys

from rddlab.harness.cli import main

GRID = {"mu": "0,0.5,1", "sigma": "0.1,0.5,1", "dim": "4,16,64"}

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "runs/ablate"
    code = 0
    for param, values in GRID.items():
        code = code or main(["ablate", "--param", param, "--values", values, "--seeds", "0,1,2,3,4",
                             "--out", out])
    sys.exit(code)
