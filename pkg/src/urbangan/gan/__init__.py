from .checkpoint import from_bytes, load_checkpoint, save_checkpoint, to_bytes
from .model import (LOG_CLAMP, GanConfig, GanModel, LossResult, build, build_discriminator,
                    build_generator, d_loss, g_loss, sample, sample_map)
from .training import StepRecord, TrainingLog, train

__all__ = [
    "LOG_CLAMP", "GanConfig", "GanModel", "LossResult", "StepRecord", "TrainingLog", "build",
    "build_discriminator", "build_generator", "d_loss", "from_bytes", "g_loss", "load_checkpoint",
    "sample", "sample_map", "save_checkpoint", "to_bytes", "train",
]
