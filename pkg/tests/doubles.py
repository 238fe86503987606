"""Constructed metrics with known meta-evaluation behaviour."""
import numpy as np

from mprtkit.metaeval import fingerprint

REFERENCE_QUALITY = {"Gradient": 5.0, "Saliency": 4.0, "IntegratedGradients": 3.0,
                     "GradientSHAP": 2.0, "Random": 1.0, "SmoothGrad": 2.5, "InputXGradient": 3.5}


def _relative_change(model, ref_model, X, ref_X):
    dx = float(np.max(np.abs(X - ref_X)))
    dw = max(float(np.linalg.norm(a.weight - b.weight) / np.linalg.norm(b.weight))
             for a, b in zip(model.layers, ref_model.layers) if a.has_params)
    return max(dx, dw)


def oracle_metric(ref_model, ref_X, threshold=0.1):
    """Ideal metric: unchanged under minor perturbations, inverted under disruptive ones.

    Scores are positive, distinct per method and vary across samples, so an
    inversion moves every method below every unperturbed score.
    """
    spread = np.linspace(0.0, 0.5, len(ref_X))

    def oracle(model, X, method, seed):
        base = REFERENCE_QUALITY[method.method] + spread
        return -base if _relative_change(model, ref_model, X, ref_X) > threshold else base

    return oracle


def coin_flip_metric(model, X, method, seed):
    """i.i.d. U(0, 1) scores, a deterministic function of everything it is given."""
    weights = [l.weight for l in model.layers if l.has_params]
    key = fingerprint(X, *weights, np.frombuffer(method.method.encode(), dtype=np.uint8).astype(float),
                      np.array([seed], dtype=float))
    return np.random.default_rng(key).uniform(size=len(X))
