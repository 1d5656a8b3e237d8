from rddlab.agents.normalizer import RunningNormalizer
from rddlab.agents.ppo import PpoAgent, PpoConfig, gae
from rddlab.agents.qlearn import QTable, q_update, value_iteration
from rddlab.agents.rollout import EpisodeRecord, PpoRunner, Trajectory, collect_rollout, run_qlearning

__all__ = [
    "EpisodeRecord", "PpoAgent", "PpoConfig", "PpoRunner", "QTable", "RunningNormalizer", "Trajectory",
    "collect_rollout", "gae", "q_update", "run_qlearning", "value_iteration",
]
