from .model import EvaluatorModel, EvaluatorConfig, ScoredScene, score_scenes, select_best
from .train import RewardTrainConfig, preference_loss, train_reward, PairExample, prepare_pair

__all__ = [
    "EvaluatorModel",
    "EvaluatorConfig",
    "ScoredScene",
    "score_scenes",
    "select_best",
    "RewardTrainConfig",
    "preference_loss",
    "train_reward",
    "PairExample",
    "prepare_pair",
]
