from .schedule import NoiseSchedule, cosine_schedule, add_noise
from .model import DenoiserModel, DenoiserConfig
from .sample import denoise_step, sample_scene, guided_sample, ChainRecord, SampleResult
from .train import TrainConfig, train_base, base_loss_and_grads

__all__ = [
    "NoiseSchedule",
    "cosine_schedule",
    "add_noise",
    "DenoiserModel",
    "DenoiserConfig",
    "denoise_step",
    "sample_scene",
    "guided_sample",
    "ChainRecord",
    "SampleResult",
    "TrainConfig",
    "train_base",
    "base_loss_and_grads",
]
