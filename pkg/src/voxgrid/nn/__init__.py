"""From-scratch differentiable 3D CNN engine: layers, presets, Adam, training."""

from .layers import (
    AvgPool3d,
    Conv3d,
    Flatten,
    GlobalAvgPool,
    GroupNorm,
    LayerNorm,
    Linear,
    Module,
    ReLU,
    ResidualBlock,
    SelfAttention3d,
    Sequential,
    SiLU,
    Sum2,
    Tanhshrink,
    bind_modules,
)
from .model import ModelConfig, Params, PRESETS, build_model, preset_info
from .optim import AdamState, adam_step, mse_loss
from .train import (
    TrainConfig,
    TrainResult,
    TrainSample,
    history_csv,
    load_checkpoint,
    predict_samples,
    save_checkpoint,
    train,
)

__all__ = [
    "AvgPool3d", "Conv3d", "Flatten", "GlobalAvgPool", "GroupNorm", "LayerNorm",
    "Linear", "Module", "ReLU", "ResidualBlock", "SelfAttention3d", "Sequential",
    "SiLU", "Sum2", "Tanhshrink", "bind_modules",
    "ModelConfig", "Params", "PRESETS", "build_model", "preset_info",
    "AdamState", "adam_step", "mse_loss",
    "TrainConfig", "TrainResult", "TrainSample", "history_csv",
    "load_checkpoint", "predict_samples", "save_checkpoint", "train",
]
