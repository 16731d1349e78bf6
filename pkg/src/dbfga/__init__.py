"""Dual-backbone classifier with frequency-gated attention, on a numpy autodiff core."""

from dbfga.attention import AttentionConfig, CbamParams, FgaParams, cbam_block, fga_block
from dbfga.model import DualBackboneNet, ModelSpec
from dbfga.tensor import Tape, Tensor, Variable, backward
from dbfga.training import TrainConfig, train_loop

__all__ = [
    "AttentionConfig",
    "CbamParams",
    "DualBackboneNet",
    "FgaParams",
    "ModelSpec",
    "Tape",
    "Tensor",
    "TrainConfig",
    "Variable",
    "backward",
    "cbam_block",
    "fga_block",
    "train_loop",
]

__version__ = "0.1.0"
