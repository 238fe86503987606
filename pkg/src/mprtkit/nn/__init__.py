from mprtkit.nn.layers import Conv2d, Dense, Flatten, InitSpec, Layer, MaxPool2d, ReLU
from mprtkit.nn.model import (
    Model,
    accuracy,
    forward,
    input_gradient,
    input_gradients,
    output_entropy,
    softmax,
)
from mprtkit.nn.randomize import (
    Order,
    RandomisationSchedule,
    make_schedule,
    randomize_layers,
    schedule_models,
)
from mprtkit.nn.train import TrainLog, train_sgd
from mprtkit.nn import checkpoint
from mprtkit.nn.zoo import build_model, mlp, toy_cnn

__all__ = [
    "Conv2d", "Dense", "Flatten", "InitSpec", "Layer", "MaxPool2d", "ReLU",
    "Model", "accuracy", "forward", "input_gradient", "input_gradients", "output_entropy", "softmax",
    "Order", "RandomisationSchedule", "make_schedule", "randomize_layers", "schedule_models",
    "TrainLog", "train_sgd", "checkpoint", "build_model", "mlp", "toy_cnn",
]
