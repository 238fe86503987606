"""Desk-scale reference problem: smooth-centred blobs and a trained toy CNN."""
from __future__ import annotations

from functools import lru_cache

from mprtkit.data import normalize, standard_record, synth_blobs
from mprtkit.nn import build_model, train_sgd

TOY = dict(n_classes=10, shape=(1, 16, 16), separation=8.0, lr=0.01, epochs=15, n_train=100, n_test=50)


@lru_cache(maxsize=8)
def toy_problem(seed: int = 0, arch: str = "toy_cnn"):
    """(trained model, train split, test split) for ``seed``; cached per process."""
    t = TOY
    train = synth_blobs(t["n_train"], t["n_classes"], t["shape"], t["separation"], seed, split="train")
    test = synth_blobs(t["n_test"], t["n_classes"], t["shape"], t["separation"], seed, split="test")
    record = standard_record(train)
    train, test = normalize(train, record), normalize(test, record)
    model = build_model(arch, t["shape"], t["n_classes"], seed=seed)
    model = train_sgd(model, train, lr=t["lr"], momentum=0.9, epochs=t["epochs"], seed=seed)
    return model, train, test
