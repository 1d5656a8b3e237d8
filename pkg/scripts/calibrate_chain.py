"""Pilot-calibrate chain budgets (20 pilot seeds) and evaluate 5 fresh seeds per bonus.

Writes ``calibration.csv`` plus one metrics CSV and manifest per evaluation
run; each manifest embeds the calibration table.

    python scripts/calibrate_chain.py runs/chain [key=value ...]
"""

import sys
from dataclasses import replace

from rddlab.harness import io
from rddlab.harness.config import resolve_config
from rddlab.harness.experiments import calibrate, train_run


def main(out: str, overrides: dict) -> None:
    cfg = resolve_config("train", None, {"env": "chain", "agent": "qlearn", **overrides})
    calibration = calibrate(cfg, ["rdd", "count"], list(range(100, 120)))
    io.write_table(io.table_path(out, "calibration", "csv"), "calibration", calibration)
    budgets = {row["bonus"]: row["budget"] for row in calibration}
    budgets["none"] = max(budgets.values())
    for bonus, budget in budgets.items():
        results = [train_run(replace(cfg, bonus=bonus, episodes=budget), seed, out, bonus,
                             manifest_extra={"calibration": calibration}) for seed in range(5)]
        wins = sum(r["success"] for r in results)
        print(f"{bonus}: {wins}/5 seeds reached the goal within {budget} episodes")


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "runs/chain"
    kv = dict(arg.split("=", 1) for arg in sys.argv[2:])
    main(out, kv)
