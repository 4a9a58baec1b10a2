"""Numpy-only MLP / Elman RNN substrate with Adam, BPTT and gradient checking."""

from .gradcheck import gradient_check
from .io import load_model, model_from_dict, model_to_dict, save_model
from .mlp import MlpModel, init_mlp, mlp_forward, zero_mlp
from .optim import Adam, TrainConfig, TrainingDiverged, evaluate_loss, loss_and_grads, train
from .rnn import RnnModel, init_rnn, rnn_forward, rnn_step

__all__ = [
    "Adam", "MlpModel", "RnnModel", "TrainConfig", "TrainingDiverged",
    "evaluate_loss", "gradient_check", "init_mlp", "init_rnn", "load_model",
    "loss_and_grads", "mlp_forward", "model_from_dict", "model_to_dict",
    "rnn_forward", "rnn_step", "save_model", "train", "zero_mlp",
]
