"""CSV/JSON emission, fixed schemas and run manifests."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from rddlab import __version__

SCHEMA_VERSION = 1

# every file the harness emits has one of these column sets, in this order
SCHEMAS = {
    "metrics": ("run_id", "seed", "global_step", "episode_index", "episode_return_ext", "mean_bonus",
                "bonus_for_probe_states", "visited_state_count", "eval_return", "wall_ms"),
    "verify_stats": ("check", "n", "mu", "sigma", "d", "delta", "trials", "mc_value", "mc_se", "closed_form",
                     "abs_gap", "rel_gap", "tolerance", "passed"),
    "toy": ("mode", "seed", "state", "step", "visit", "count", "z_exact", "z_pred", "y_exact", "y_pred", "rnd",
            "drnd_bonus"),
    "density": ("run_id", "bonus", "seed", "window", "bin", "bin_low", "bin_high", "unit_low",
                "unit_high", "density"),
    "density_summary": ("run_id", "bonus", "seed", "window", "steps", "occupied_bins", "goal_mass"),
    "ablate": ("param", "value", "seed", "final_return", "success", "first_success_episode",
               "cold_start_bonus"),
    "ablate_summary": ("param", "value", "seeds", "median_final_return", "iqr_final_return", "success_rate"),
    "calibration": ("bonus", "seeds", "budget", "p20_success_episode", "successes"),
}


def fmt(value) -> str:
    """Render one cell: floats with 9 significant digits, lists ';'-joined."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".9g")
    if isinstance(value, (list, tuple)):
        return ";".join(fmt(v) for v in value)
    if hasattr(value, "item"):
        return fmt(value.item())
    return str(value)


def _jsonable(value):
    if hasattr(value, "item"):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


class TableWriter:
    """Append rows of a fixed schema to ``path`` (CSV or JSON lines), flushing each row.

    Flushing per row makes a crashed run leave every completed row on disk.
    """

    def __init__(self, path, schema: str, fmt_name: str = "csv"):
        if schema not in SCHEMAS:
            raise KeyError(f"unknown schema {schema!r}")
        self.columns = SCHEMAS[schema]
        self.schema = schema
        self.format = fmt_name
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        if fmt_name == "csv":
            self._csv = csv.writer(self._fh)
            self._csv.writerow(self.columns)
        self.rows = 0

    def write(self, row: dict) -> None:
        extra = set(row) - set(self.columns)
        if extra:
            raise KeyError(f"columns {sorted(extra)} not in schema {self.schema}")
        if self.format == "csv":
            self._csv.writerow([fmt(row.get(c)) for c in self.columns])
        else:
            self._fh.write(json.dumps({c: _jsonable(row.get(c)) for c in self.columns}) + "\n")
        self._fh.flush()
        self.rows += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def table_path(out_dir, stem: str, fmt_name: str) -> Path:
    return Path(out_dir) / f"{stem}.{'csv' if fmt_name == 'csv' else 'jsonl'}"


def write_table(path, schema: str, rows, fmt_name: str = "csv") -> Path:
    with TableWriter(path, schema, fmt_name) as w:
        for row in rows:
            w.write(row)
    return Path(path)


def read_table(path) -> list[dict]:
    """Read a CSV or JSON-lines table back as a list of string/JSON dicts."""
    path = Path(path)
    if path.suffix == ".jsonl":
        return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def check_schema(path, schema: str) -> list[dict]:
    """Parse ``path`` and verify its header matches ``schema`` exactly."""
    path = Path(path)
    if path.suffix == ".jsonl":
        rows = read_table(path)
        for row in rows:
            if tuple(row) != SCHEMAS[schema]:
                raise ValueError(f"{path}: keys {tuple(row)} do not match schema {schema}")
        return rows
    with open(path, newline="") as fh:
        header = tuple(next(csv.reader(fh)))
    if header != SCHEMAS[schema]:
        raise ValueError(f"{path}: header {header} does not match schema {schema}")
    return read_table(path)


def write_manifest(out_dir, run_id: str, config: dict, seed: int, estimator: str, deviations: list[str],
                   outputs: list[str], extra: dict | None = None) -> Path:
    """Write ``<run_id>.manifest.json``. Called once, before any metric row; never rewritten."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{run_id}.manifest.json"
    doc = {
        "run_id": run_id,
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "seed": seed,
        "estimator": estimator,
        "config": config,
        "deviations": deviations,
        "outputs": outputs,
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return path


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
