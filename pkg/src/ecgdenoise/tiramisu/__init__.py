"""Dense-block 1D autoencoder: model, training, checkpoints, kernels."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, TrainingConfig, reduced_gradcheck_config, tiny_config
from .kernels import backend_name
from .model import TiramisuModel, build_model, channel_plan
from .train import Adam, gradient_check, mse_loss, train, training_loss

__all__ = [
    "Adam",
    "ModelConfig",
    "TiramisuModel",
    "TrainingConfig",
    "backend_name",
    "build_model",
    "channel_plan",
    "gradient_check",
    "load_checkpoint",
    "mse_loss",
    "reduced_gradcheck_config",
    "save_checkpoint",
    "tiny_config",
    "train",
    "training_loss",
]
