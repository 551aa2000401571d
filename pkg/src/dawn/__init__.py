"""Deep adaptive wavelet network: trainable lifting-scheme wavelets inside an
end-to-end image classifier, on a small numpy autograd engine."""

from .checkpoint import CheckpointError, export_checkpoint, import_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .lifting import Lifting2D, LiftingStep, PredictorUpdater, merge_even_odd, split_even_odd
from .model import DawnConfig, DawnModel, build, compute_levels, param_count
from .tensor import Parameter, Tensor, no_grad, precision
from .training import LossBreakdown, TrainConfig, composite_loss, evaluate, lr_at, train

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "DawnConfig",
    "DawnModel",
    "GradCheckReport",
    "Lifting2D",
    "LiftingStep",
    "LossBreakdown",
    "Parameter",
    "PredictorUpdater",
    "Tensor",
    "TrainConfig",
    "build",
    "composite_loss",
    "compute_levels",
    "evaluate",
    "export_checkpoint",
    "grad_check",
    "import_checkpoint",
    "lr_at",
    "merge_even_odd",
    "no_grad",
    "param_count",
    "precision",
    "split_even_odd",
    "train",
]
