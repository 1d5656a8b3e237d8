"""Random distribution distillation exploration bonuses, baselines and a verification lab."""

__version__ = "0.1.0"
