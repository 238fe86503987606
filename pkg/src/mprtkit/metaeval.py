"""Meta-evaluation of metrics under controlled input and model perturbations.

A metric is scored on how it reacts to two perturbation tests, input
perturbation (IPT, additive uniform noise) and model perturbation (MPT,
multiplicative Gaussian weight noise), each in a minor (NR) and a disruptive
(AR) regime, through two criteria:

* IAC: a Wilcoxon signed-rank p-value between per-sample scores before and
  after perturbation (``p`` for NR, ``1 - p`` for AR).
* IEC: stability of the categorical ranking of explanation methods (NR) or
  the share of methods whose perturbed score ranks below their unperturbed
  one (AR).

``MC`` is the mean of ``[IAC_NR, IAC_AR, IEC_NR, IEC_AR]``.
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from mprtkit.attribution import MethodConfig
from mprtkit.complexity import HistogramSpec
from mprtkit.core import MprtError, ParameterError, RngStream, derive_stream_id, sample_uniform
from mprtkit.metrics import emprt, final_score, mprt, smprt
from mprtkit.nn.model import Model
from mprtkit.stats import rankdata, wilcoxon_signed_rank

NR, AR = "NR", "AR"
IPT, MPT = "IPT", "MPT"

# per-sample scores for one (model, inputs, method, seed)
ScoreFn = Callable[[Model, np.ndarray, MethodConfig, int], np.ndarray]


class MetaEvaluationError(MprtError):
    pass


@dataclass(frozen=True)
class PerturbationConfig:
    test: str
    regime: str
    alpha: float = 0.0   # IPT: noise ~ U(alpha, beta)
    beta: float = 0.0
    mu: float = 1.0      # MPT: weights *= N(mu, sigma)
    sigma: float = 0.0

    def __post_init__(self):
        if self.test not in (IPT, MPT) or self.regime not in (NR, AR):
            raise ParameterError(f"bad perturbation {self.test}/{self.regime}")
        if self.alpha > self.beta or self.sigma < 0:
            raise ParameterError("need alpha <= beta and sigma >= 0")

    @property
    def magnitude(self) -> float:
        return self.beta - self.alpha if self.test == IPT else self.sigma


def default_perturbations() -> dict:
    return {
        (IPT, NR): PerturbationConfig(IPT, NR, alpha=-0.001, beta=0.001),
        (IPT, AR): PerturbationConfig(IPT, AR, alpha=-2.0, beta=2.0),
        (MPT, NR): PerturbationConfig(MPT, NR, mu=1.0, sigma=0.001),
        (MPT, AR): PerturbationConfig(MPT, AR, mu=1.0, sigma=2.0),
    }


@dataclass
class MetaConfig:
    K: int = 5
    iterations: int = 3
    seed: int = 0
    perturbations: dict = field(default_factory=default_perturbations)

    def __post_init__(self):
        if self.K < 2 or self.iterations < 1:
            raise ParameterError("need K >= 2 and iterations >= 1")
        for test in (IPT, MPT):
            nr, ar = self.perturbations[(test, NR)], self.perturbations[(test, AR)]
            if not nr.magnitude < ar.magnitude:
                raise ParameterError(f"{test}: NR perturbation must be smaller than AR")

    def to_dict(self) -> dict:
        return {"K": self.K, "iterations": self.iterations, "seed": self.seed,
                "perturbations": {f"{t}_{r}": asdict(p) for (t, r), p in sorted(self.perturbations.items())}}


@dataclass
class MetaResult:
    test: str
    metric: str
    method_set: tuple
    m: list[float]            # [IAC_NR, IAC_AR, IEC_NR, IEC_AR], mean over iterations
    mc: float                 # mean over iterations
    mc_std: float
    m_per_iteration: list[list[float]]


@dataclass
class MetaReport:
    metric: str
    method_set: tuple
    results: dict             # test -> MetaResult
    mc_bar: float
    mc_bar_std: float
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "method_set": list(self.method_set),
            "tests": {t: {"m": r.m, "mc": r.mc, "mc_std": r.mc_std, "m_per_iteration": r.m_per_iteration}
                      for t, r in self.results.items()},
            "mc_bar": self.mc_bar,
            "mc_bar_std": self.mc_bar_std,
            "provenance": self.provenance,
        }


# ---------------------------------------------------------------- perturbations

def perturb_input(x, alpha: float, beta: float, stream: RngStream) -> np.ndarray:
    if alpha > beta:
        raise ParameterError("alpha must not exceed beta")
    x = np.asarray(x, dtype=np.float64)
    if alpha == beta == 0:
        return x.copy()
    return x + sample_uniform(stream, x.shape, alpha, beta)


def perturb_model(model: Model, mu: float, sigma: float, stream: RngStream) -> Model:
    """Multiply every weight (biases untouched) by an i.i.d. N(mu, sigma) draw."""
    if sigma < 0:
        raise ParameterError("sigma must be non-negative")
    updates = {}
    for i in model.param_indices:
        layer = model.layers[i]
        if sigma == 0:
            nu = np.full(layer.weight.shape, float(mu))
        else:
            nu = stream.child("layer", i).generator().normal(mu, sigma, size=layer.weight.shape)
        updates[i] = layer.with_params(layer.weight * nu, layer.bias)
    return model.replace(updates)


# ---------------------------------------------------------------- criteria

def iac(scores_base, scores_pert, regime: str) -> float:
    a = np.asarray(scores_base, dtype=np.float64)
    b = np.asarray(scores_pert, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError("IAC needs paired score lists of equal length")
    if a.size < 5:
        raise ParameterError("IAC needs at least 5 paired scores")
    p = wilcoxon_signed_rank(a, b).pvalue
    if regime == NR:
        return p
    if regime == AR:
        return 1.0 - p
    raise ParameterError(f"unknown regime {regime!r}")


def categorical_ranks(scores: dict) -> dict:
    """Rank 1 = highest score; ties go to the alphabetically first method."""
    order = sorted(scores, key=lambda m: (-scores[m], m))
    return {m: r + 1 for r, m in enumerate(order)}


def iec(base_scores: dict, pert_scores: dict, regime: str) -> float:
    """``base_scores``/``pert_scores`` map method id -> quality (higher is better)."""
    if set(base_scores) != set(pert_scores):
        raise ParameterError("IEC needs the same method set before and after perturbation")
    if len(base_scores) < 2:
        raise ParameterError("IEC needs at least two methods")
    methods = sorted(base_scores)
    if regime == NR:
        rb, rp = categorical_ranks(base_scores), categorical_ranks(pert_scores)
        return sum(rb[m] == rp[m] for m in methods) / len(methods)
    if regime == AR:
        joint = np.array([base_scores[m] for m in methods] + [pert_scores[m] for m in methods])
        ranks = rankdata(-joint)
        n = len(methods)
        return float(np.sum(ranks[n:] > ranks[:n])) / n
    raise ParameterError(f"unknown regime {regime!r}")


def mc_score(m) -> float:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (4,):
        raise ParameterError("m must have four entries")
    if np.any(m < 0) or np.any(m > 1):
        raise ParameterError("m entries must lie in [0, 1]")
    return float(m.mean())


# ---------------------------------------------------------------- metric adapters

HIGHER_IS_BETTER = {"mprt": False, "smprt": False, "emprt": True}


def metric_score_fn(metric: str, **params) -> ScoreFn:
    """Per-sample scalar scores of one of the built-in metrics (NaN for skipped samples)."""
    metric = metric.lower()
    if metric not in HIGHER_IS_BETTER:
        raise ParameterError(f"unknown metric {metric!r}")

    def score(model, inputs, method, seed):
        out = np.full(len(inputs), np.nan)
        if metric == "emprt":
            spec = params.get("spec", HistogramSpec(params.get("bins", 100)))
            for r in emprt(model, inputs, method, spec=spec, seed=seed, threads=params.get("threads", 1)):
                out[r.sample] = r.score
            return out
        common = {"sim": params.get("sim", "ssim"), "seed": seed, "threads": params.get("threads", 1)}
        if metric == "mprt":
            curves = mprt(model, inputs, method, order=params.get("order", "BottomUp"), **common)
        else:
            curves = smprt(model, inputs, method, N=params.get("N", 50),
                           sigma_rel=params.get("sigma_rel", 0.2), order=params.get("order", "BottomUp"),
                           **common)
        for c in curves:
            out[c.sample] = final_score(c)
        return out

    return score


def _iteration_seed(seed: int, iteration: int) -> int:
    return derive_stream_id("meta-iteration", seed, iteration) & 0x7FFFFFFFFFFFFFFF


def run_meta_evaluation(metric, model: Model, dataset, method_set, config: MetaConfig = MetaConfig(),
                        higher_is_better: bool | None = None, metric_params: dict | None = None) -> MetaReport:
    """IPT and MPT meta-evaluation of ``metric`` over ``method_set``.

    ``metric`` is a built-in metric id (``mprt``, ``smprt``, ``emprt``) or a
    :data:`ScoreFn`. Scores are turned into qualities (higher is better)
    before ranking; IAC uses the raw scores.
    """
    methods = [m if isinstance(m, MethodConfig) else MethodConfig(m) for m in method_set]
    names = [m.method for m in methods]
    if len(set(names)) < 2:
        raise ParameterError("meta-evaluation needs at least two distinct methods")
    if callable(metric):
        metric_id, score_fn = getattr(metric, "__name__", "custom"), metric
        hib = True if higher_is_better is None else higher_is_better
    else:
        metric_id = str(metric).lower()
        score_fn = metric_score_fn(metric_id, **(metric_params or {}))
        hib = HIGHER_IS_BETTER[metric_id] if higher_is_better is None else higher_is_better
    sign = 1.0 if hib else -1.0
    X = np.asarray(getattr(dataset, "inputs", dataset), dtype=np.float64)

    def scores_for(mdl, inputs, seed):
        out = {}
        for cfg in methods:
            s = np.asarray(score_fn(mdl, inputs, cfg, seed), dtype=np.float64)
            if s.shape != (len(inputs),):
                raise MetaEvaluationError(f"score function returned shape {s.shape}")
            out[cfg.method] = s
        return out

    per_test = {IPT: [], MPT: []}
    for it in range(config.iterations):
        seed_it = _iteration_seed(config.seed, it)
        base = scores_for(model, X, seed_it)
        if all(np.all(np.isnan(v)) for v in base.values()):
            raise MetaEvaluationError(f"{metric_id} failed on every sample")
        for test in (IPT, MPT):
            iac_vals = {NR: [], AR: []}
            iec_vals = {NR: [], AR: []}
            for regime in (NR, AR):
                p = config.perturbations[(test, regime)]
                for k in range(config.K):
                    stream = RngStream(config.seed, derive_stream_id("meta", test, regime, it, k))
                    if test == IPT:
                        pert = scores_for(model, perturb_input(X, p.alpha, p.beta, stream), seed_it)
                    else:
                        pert = scores_for(perturb_model(model, p.mu, p.sigma, stream), X, seed_it)
                    for name in names:
                        ok = ~(np.isnan(base[name]) | np.isnan(pert[name]))
                        if ok.sum() >= 5:
                            iac_vals[regime].append(iac(base[name][ok], pert[name][ok], regime))
                    sample_iec = []
                    for j in range(len(X)):
                        qb = {n: sign * base[n][j] for n in names}
                        qp = {n: sign * pert[n][j] for n in names}
                        if np.isnan(list(qb.values()) + list(qp.values())).any():
                            continue
                        sample_iec.append(iec(qb, qp, regime))
                    if sample_iec:
                        iec_vals[regime].append(float(np.mean(sample_iec)))
            if not all(iac_vals.values()) or not all(iec_vals.values()):
                raise MetaEvaluationError(f"{metric_id}: too few valid samples for {test}")
            m = [float(np.mean(iac_vals[NR])), float(np.mean(iac_vals[AR])),
                 float(np.mean(iec_vals[NR])), float(np.mean(iec_vals[AR]))]
            per_test[test].append(m)

    results = {}
    mcs = {}
    for test, ms in per_test.items():
        arr = np.array(ms)
        mc_it = np.array([mc_score(row) for row in arr])
        mcs[test] = mc_it
        results[test] = MetaResult(test, metric_id, tuple(names), arr.mean(axis=0).tolist(),
                                   float(mc_it.mean()), float(mc_it.std()), arr.tolist())
    bar = (mcs[IPT] + mcs[MPT]) / 2.0
    provenance = {"config": config.to_dict(), "metric_params": _jsonable(metric_params or {}),
                  "higher_is_better": hib,
                  "iteration_seeds": [_iteration_seed(config.seed, it) for it in range(config.iterations)]}
    return MetaReport(metric_id, tuple(names), results, float(bar.mean()), float(bar.std()), provenance)


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, (int, float, str, bool)) or v is None:
            out[k] = v
        else:
            out[k] = repr(v)
    return out


def fingerprint(*arrays) -> int:
    """Stable 64-bit hash of array contents (handy for deterministic test metrics)."""
    h = hashlib.blake2b(digest_size=8)
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return int.from_bytes(h.digest(), "little")
