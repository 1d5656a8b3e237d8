"""Experiment configuration: key=value files, CLI overrides, validation.

A config file is plain text, one ``key = value`` per line, ``#`` starts a
comment. List-valued keys take comma-separated values. Flags given on the
command line win over the file.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from rddlab.baselines import ESTIMATORS
from rddlab.envs import ENVS

AGENTS = ("qlearn", "ppo")
COMMANDS = ("verify-stats", "toy", "train", "density", "ablate")
TOY_MODES = ("decay", "walk")
ABLATE_PARAMS = ("mu", "sigma", "dim")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    command: str = "train"
    seed: int = 0
    seeds: list[int] = field(default_factory=list)
    out: str = "runs"
    format: str = "csv"

    # training
    env: str = "chain"
    agent: str = "qlearn"
    bonus: str = "rdd"
    steps: int = 0
    episodes: int = 500
    chain_length: int = 40
    obs: str = "compact"
    eval_every: int = 0
    n_envs: int = 8
    rollout_len: int = 128

    # estimator (defaults from the reference hyperparameter table)
    mu: float = 1.0
    sigma: float = 1.0
    dim: int = 64
    hidden: int = 64
    lr: float = 3e-4
    drnd_n: int = 10
    mean_mode: str = "constant"
    count_bins: int = 64
    count_sqrt: bool = False

    # agent
    lam: float = 1.0
    gamma: float = 0.99
    alpha: float = 0.5
    epsilon: float = 0.1
    clip: float = 0.1
    epochs: int = 4
    gae_lambda: float = 0.95

    # verify-stats
    ns: list[int] = field(default_factory=lambda: [1, 2, 5, 10, 50])
    mus: list[float] = field(default_factory=lambda: [1.0, 0.0])
    sigmas: list[float] = field(default_factory=lambda: [1.0])
    dims: list[int] = field(default_factory=lambda: [1, 16])
    deltas: list[float] = field(default_factory=lambda: [0.05, 0.1])
    trials: int = 100_000

    # toy
    mode: str = "decay"
    points: int = 5
    visits: int = 50
    walk_steps: int = 200
    samples_per_step: int = 5

    # density
    bonuses: list[str] = field(default_factory=lambda: ["rdd", "none"])
    window: int = 20_000
    bins: int = 50

    # ablate
    param: str = "sigma"
    values: list[float] = field(default_factory=lambda: [0.1, 1.0])

    @property
    def seed_list(self) -> list[int]:
        return list(self.seeds) if self.seeds else [self.seed]

    def validate(self) -> "ExperimentConfig":
        def bad(name, msg):
            raise ConfigError(f"{name}: {msg}")

        choices = {"command": COMMANDS, "env": ENVS, "agent": AGENTS, "bonus": ESTIMATORS,
                   "format": ("csv", "json"), "mode": TOY_MODES, "param": ABLATE_PARAMS,
                   "obs": ("compact", "onehot"), "mean_mode": ("constant", "random_net")}
        for name, valid in choices.items():
            if getattr(self, name) not in valid:
                bad(name, f"unknown value {getattr(self, name)!r}; valid options: {', '.join(valid)}")
        for b in self.bonuses:
            if b not in ESTIMATORS:
                bad("bonuses", f"unknown value {b!r}; valid options: {', '.join(ESTIMATORS)}")
        if self.sigma < 0:
            bad("sigma", "must be >= 0")
        for name in ("dim", "hidden", "drnd_n", "chain_length", "n_envs", "rollout_len", "points", "visits",
                     "window", "bins", "epochs", "samples_per_step"):
            if getattr(self, name) < 1:
                bad(name, "must be >= 1")
        if self.drnd_n < 2:
            bad("drnd_n", "DRND needs at least 2 target networks")
        if self.steps < 0 or self.episodes < 0:
            bad("steps" if self.steps < 0 else "episodes", "must be >= 0")
        if self.trials < 100:
            bad("trials", "need at least 100 Monte-Carlo trials")
        if not 0 <= self.gamma <= 1:
            bad("gamma", "must lie in [0, 1]")
        if not 0 < self.alpha <= 1:
            bad("alpha", "must lie in (0, 1]")
        if not 0 <= self.epsilon <= 1:
            bad("epsilon", "must lie in [0, 1]")
        if any(not 0 < d < 1 for d in self.deltas):
            bad("deltas", "every delta must lie in (0, 1)")
        if any(n < 1 for n in self.ns):
            bad("ns", "every n must be >= 1")
        if any(s <= 0 for s in self.sigmas):
            bad("sigmas", "every sigma must be > 0")
        if self.agent == "qlearn" and self.env == "mountaincar":
            bad("agent", "qlearn needs a tabular env (chain or grid)")
        if self.command == "ablate" and self.param == "dim" and any(v < 1 or v != int(v) for v in self.values):
            bad("values", "dim values must be positive integers")
        if self.command == "ablate" and self.param == "sigma" and any(v < 0 for v in self.values):
            bad("values", "sigma values must be >= 0")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_HINTS = typing.get_type_hints(ExperimentConfig)
FIELDS = tuple(f.name for f in dataclasses.fields(ExperimentConfig))


def _parse_scalar(kind, text: str, name: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            try:
                return int(text)
            except ValueError:
                # accept "1e5"-style integers
                value = float(text)
                if value != int(value):
                    raise
                return int(value)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {kind.__name__}") from None


def parse_value(name: str, text) -> object:
    """Convert the string ``text`` to the declared type of field ``name``."""
    if name not in _HINTS:
        raise ConfigError(f"{name}: unknown config key; valid keys: {', '.join(FIELDS)}")
    kind = _HINTS[name]
    if not isinstance(text, str):
        return text
    if typing.get_origin(kind) is list:
        (inner,) = typing.get_args(kind)
        return [_parse_scalar(inner, t, name) for t in text.split(",") if t.strip()]
    return _parse_scalar(kind, text, name)


def read_config_file(path) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        values[key] = parse_value(key, value)
    return values


def write_config_file(config: ExperimentConfig, path) -> Path:
    lines = []
    for k, v in config.to_dict().items():
        lines.append(f"{k} = {','.join(map(str, v)) if isinstance(v, list) else v}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def resolve_config(command: str, path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the file at ``path``, then non-None ``overrides``; validated."""
    values = {"command": command}
    if path is not None:
        values.update(read_config_file(path))
        values["command"] = command
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = parse_value(k, v)
    unknown = set(values) - set(FIELDS)
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown config key")
    return ExperimentConfig(**values).validate()
