from .base import (LossFunction, QuadraticLoss, RotInvToy, SaddleToy,
                   ScaleInvToy, default_fd_step, finite_diff_hessian,
                   frobenius_sq_estimate, hutchinson_trace, hvp)
from .data import Dataset, load_digits64, load_idx, synth_blobs, write_idx
from .mlp import MlpLoss, MlpModel, mlp_loss_and_grad

__all__ = [
    "LossFunction", "QuadraticLoss", "RotInvToy", "SaddleToy", "ScaleInvToy",
    "default_fd_step", "finite_diff_hessian", "frobenius_sq_estimate",
    "hutchinson_trace", "hvp",
    "Dataset", "load_digits64", "load_idx", "synth_blobs", "write_idx",
    "MlpLoss", "MlpModel", "mlp_loss_and_grad",
]
