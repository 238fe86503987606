"""Layer re-initialisation and cumulative randomisation schedules."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from mprtkit.core import ParameterError, RngStream, derive_stream_id
from mprtkit.nn.model import Model


class Order(str, Enum):
    TOP_DOWN = "TopDown"
    BOTTOM_UP = "BottomUp"

    @classmethod
    def parse(cls, value) -> "Order":
        if isinstance(value, Order):
            return value
        key = str(value).replace("-", "").replace("_", "").lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ParameterError(f"unknown randomisation order {value!r}")


def layer_stream(seed: int, layer_index: int) -> RngStream:
    return RngStream(seed, derive_stream_id("randomize", layer_index))


def randomize_layers(model: Model, layer_set, seed: int) -> Model:
    """Resample weights and biases of ``layer_set`` from each layer's init spec.

    The draw for layer ``i`` depends only on ``(seed, i)``, so the cumulative
    steps of any schedule agree on every layer they share.
    """
    layer_set = sorted(set(int(i) for i in layer_set))
    updates = {}
    for i in layer_set:
        if i < 0 or i >= len(model.layers) or not model.layers[i].has_params:
            raise ParameterError(f"layer {i} has no parameters to randomise")
        layer = model.layers[i]
        gen = layer_stream(seed, i).generator()
        w = layer.init.sample(gen, layer.weight.shape)
        b = layer.init.sample(gen, layer.bias.shape)
        updates[i] = layer.with_params(w, b)
    return model.replace(updates) if updates else model


@dataclass(frozen=True)
class RandomisationSchedule:
    order: Order
    steps: tuple[frozenset, ...]
    layers: tuple[int, ...]  # layer added at each step
    seed: int

    def __len__(self):
        return len(self.steps)


def make_schedule(model: Model, order, seed: int = 0) -> RandomisationSchedule:
    order = Order.parse(order)
    idx = model.param_indices
    seq = list(reversed(idx)) if order is Order.TOP_DOWN else list(idx)
    steps = tuple(frozenset(seq[:k + 1]) for k in range(len(seq)))
    return RandomisationSchedule(order, steps, tuple(seq), seed)


def schedule_models(model: Model, schedule: RandomisationSchedule) -> list[Model]:
    """The partially randomised model for every step of ``schedule``."""
    return [randomize_layers(model, step, schedule.seed) for step in schedule.steps]
