from .layers import Conv2D, Dense, Flatten, MaxPool2D, ReLU, Tanh, glorot_uniform
from .network import (
    Adam,
    BranchNet,
    SGD,
    Sequential,
    branchnet_from_specs,
    clip_grad_norm,
    copy_weights,
    load_checkpoint,
    load_net_state,
    make_optimizer,
    net_state,
    save_checkpoint,
    sequential_from_specs,
    soft_update,
    zero_grads,
)
from .gradcheck import GradCheckReport, gradient_check

__all__ = [
    "Adam", "BranchNet", "Conv2D", "Dense", "Flatten", "GradCheckReport", "MaxPool2D",
    "ReLU", "SGD", "Sequential", "Tanh", "branchnet_from_specs", "clip_grad_norm",
    "copy_weights", "glorot_uniform", "gradient_check", "load_checkpoint",
    "load_net_state", "make_optimizer", "net_state", "save_checkpoint",
    "sequential_from_specs", "soft_update", "zero_grads",
]
