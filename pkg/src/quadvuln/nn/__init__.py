"""Differentiable core: autodiff tensors, quad MVSA model, Adam, checkpoints."""

from quadvuln.nn.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from quadvuln.nn.model import (
    FULL,
    Architecture,
    Batch,
    ViewInput,
    ViewMask,
    attention_head,
    ce_loss,
    forward,
    head_forward,
    init_params,
    loss_and_grads,
    mvsa,
    predict_proba,
    quad_fuse,
)
from quadvuln.nn.optim import AdamState, adam_step
from quadvuln.nn.tensor import Tensor

__all__ = [
    "FULL",
    "AdamState",
    "Architecture",
    "Batch",
    "Checkpoint",
    "Tensor",
    "ViewInput",
    "ViewMask",
    "adam_step",
    "attention_head",
    "ce_loss",
    "forward",
    "head_forward",
    "init_params",
    "load_checkpoint",
    "loss_and_grads",
    "mvsa",
    "predict_proba",
    "quad_fuse",
    "save_checkpoint",
]
