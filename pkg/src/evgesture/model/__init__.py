from .config import ConvSpec, ModelConfig
from .crop import crop_resize, crop_resize_backward
from .losses import LossResult, compute_loss
from .network import (
    ForwardOutput,
    Parameters,
    activation_points,
    backward,
    combine_probabilities,
    forward,
    init_params,
    parameter_report,
    quantizable_layers,
    to_model_input,
)
from .optim import Adam, learning_rate
from .train import Dataset, TrainConfig, TrainState, finetune, predict, train, train_epoch


def save_params(path, params: Parameters, config: ModelConfig, meta: dict | None = None) -> None:
    from . import params_io

    params_io.save(path, params, config.to_dict(), meta)


def load_params(path) -> tuple[Parameters, ModelConfig, dict]:
    from . import params_io

    tensors, cfg, meta = params_io.load(path)
    return Parameters(tensors), ModelConfig.from_dict(cfg), meta
