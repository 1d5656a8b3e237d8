"""Monte-Carlo check of the visitation statistics; exits 3 if any row fails.

    python scripts/verify_stats.py --out runs/verify --trials 100000
"""

import sys

from rddlab.harness.cli import main

if __name__ == "__main__":
    sys.exit(main(["verify-stats", *sys.argv[1:]]))
