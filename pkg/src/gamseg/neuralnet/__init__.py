from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_finite_diff_check
from .layers import conv2d_forward, lstm_cell_step
from .loss import sigmoid, weighted_bce_grad, weighted_bce_with_logits
from .model import REDUCED_ARCH, BoundaryModel, ModelArchitecture
from .optim import Adam, adam_step
from .tensor import Tensor

__all__ = [
    "Adam", "BoundaryModel", "ModelArchitecture", "REDUCED_ARCH", "Tensor", "adam_step",
    "conv2d_forward", "grad_finite_diff_check", "load_checkpoint", "lstm_cell_step",
    "save_checkpoint", "sigmoid", "weighted_bce_grad", "weighted_bce_with_logits",
]
