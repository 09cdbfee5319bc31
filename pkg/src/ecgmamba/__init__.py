"""1D-CNN + bidirectional selective state-space classifier for 12-lead ECG."""

__version__ = "0.1.0"

from .model import Model, ModelConfig, bce_loss, forward, parameter_count  # noqa: E402
from .train import TrainConfig, lr_at, train_loop  # noqa: E402

__all__ = [
    "Model",
    "ModelConfig",
    "TrainConfig",
    "bce_loss",
    "forward",
    "lr_at",
    "parameter_count",
    "train_loop",
    "__version__",
]
