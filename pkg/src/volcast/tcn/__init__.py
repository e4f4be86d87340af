"""Dilated causal convolutional forecaster."""
from .kernels import BACKEND
from .model import (ConvLayer, Tape, TcnModel, backward, causal_conv1d, forward, mse_loss_seq,
                    mse_loss_seq_grad, predict_next)
from .optim import AdadeltaState, adadelta_step
from .training import TrainConfig, TrainResult, train

__all__ = [
    "BACKEND", "ConvLayer", "Tape", "TcnModel", "backward", "causal_conv1d", "forward",
    "mse_loss_seq", "mse_loss_seq_grad", "predict_next", "AdadeltaState", "adadelta_step",
    "TrainConfig", "TrainResult", "train",
]
