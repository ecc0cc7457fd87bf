"""Numpy BiLSTM + self-attention regressor with hand-written gradients."""
from .attention import attention_backward, attention_forward, softmax
from .lstm import bilstm_backward, bilstm_forward, lstm_cell_forward, sigmoid
from .model import model_backward, model_forward, mse_loss
from .optim import Adam
from .params import GROUPS, ModelConfig, ModelParams, group_of, parameter_shapes

__all__ = [
    "Adam", "GROUPS", "ModelConfig", "ModelParams", "attention_backward", "attention_forward",
    "bilstm_backward", "bilstm_forward", "group_of", "lstm_cell_forward", "model_backward",
    "model_forward", "mse_loss", "parameter_shapes", "sigmoid", "softmax",
]
