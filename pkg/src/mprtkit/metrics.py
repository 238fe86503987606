"""Randomisation-based faithfulness metrics: MPRT, smooth MPRT and efficient MPRT.

All three explain each sample for the class the *original* model predicts and
hold that class fixed while the model is randomised. Randomness is drawn from
streams keyed by ``(seed, sample, step, draw)``; samples can therefore be
processed in any order or in parallel with identical results.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from mprtkit.attribution import MethodConfig, explain
from mprtkit.complexity import HistogramSpec, histogram_entropy
from mprtkit.core import DegenerateAttributionError, ParameterError, RngStream, derive_stream_id
from mprtkit.nn.model import Model, output_entropy
from mprtkit.nn.randomize import Order, make_schedule, randomize_layers, schedule_models
from mprtkit.similarity import curve_auc, get_similarity, normalize_second_moment

log = logging.getLogger(__name__)

ORIGINAL_STEP = -1

CURVE_COLUMNS = ("dataset", "model_id", "method", "order", "sample", "step", "layer_name", "score")
SCALAR_COLUMNS = ("method", "sample", "score")
SCHEMA_VERSION = 1


@dataclass
class MetricCurve:
    method: str
    sample: int
    order: str
    step_scores: list[float]
    layer_names: list[str]

    @property
    def scalar(self) -> float:
        return final_score(self)


@dataclass
class EmprtResult:
    method: str
    sample: int
    xi_original: float
    xi_randomized: float
    score: float
    xi_curve: list[float] | None = None             # [original, step 1, ..., step L]
    model_entropy_curve: list[float] | None = None  # same indexing, output entropy in bits


@dataclass
class Diagnostic:
    method: str
    sample: int
    reason: str


@dataclass
class _Context:
    model: Model
    inputs: np.ndarray
    targets: np.ndarray
    box: tuple
    seed: int
    diagnostics: list = field(default_factory=list)


def attribution_stream(seed: int, sample: int, step: int, draw: int = 0) -> RngStream:
    return RngStream(seed, derive_stream_id("attr", sample, step, draw))


def noise_stream(seed: int, sample: int, draw: int) -> RngStream:
    return RngStream(seed, derive_stream_id("input-noise", sample, draw))


def _inputs(dataset) -> np.ndarray:
    return np.asarray(getattr(dataset, "inputs", dataset), dtype=np.float64)


def _context(model, dataset, seed) -> _Context:
    X = _inputs(dataset)
    if len(X) == 0:
        raise ParameterError("metric needs a non-empty dataset")
    targets = np.argmax(model.predict(X), axis=1)
    return _Context(model, X, targets, (X.min(axis=0), X.max(axis=0)), seed)


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _collect(results, diagnostics):
    out = []
    for res in results:
        if isinstance(res, Diagnostic):
            log.warning("skipping sample %d (%s): %s", res.sample, res.method, res.reason)
            if diagnostics is not None:
                diagnostics.append(res)
        else:
            out.append(res)
    return out


def _avg_explanation(model, x, y, method, seed, sample, step, n, sigma_rel, box):
    """Mean preprocessed attribution over ``n`` noisy copies of ``x``."""
    sigma = sigma_rel * float(x.max() - x.min())
    acc = None
    for i in range(n):
        xi = x if sigma == 0 else x + noise_stream(seed, sample, i).generator().normal(0.0, sigma, x.shape)
        e = explain(model, xi, y, method, attribution_stream(seed, sample, step, i), box)
        acc = e.copy() if acc is None else acc + e
    return acc / n


def _record(recorder, method, results):
    if recorder is not None:
        for s, (_, maps) in enumerate(results):
            recorder.extend((s, method.method, k, m) for k, m in maps)


def mprt(model: Model, dataset, method: MethodConfig, order="TopDown", sim="ssim", seed: int = 0,
         threads: int = 1, diagnostics: list | None = None, recorder: list | None = None) -> list[MetricCurve]:
    """Similarity between the original explanation and explanations of
    cumulatively randomised models, one curve per sample.

    ``recorder``, if given, receives ``(sample, method, step, map)`` tuples for
    every preprocessed attribution (step -1 is the original model).
    """
    ctx = _context(model, dataset, seed)
    schedule = make_schedule(model, order, seed)
    models = schedule_models(model, schedule)
    names = [model.layer_name(i) for i in schedule.layers]
    rho = get_similarity(sim)

    def one(s):
        x, y = ctx.inputs[s], int(ctx.targets[s])
        maps = []
        e = explain(model, x, y, method, attribution_stream(seed, s, ORIGINAL_STEP), ctx.box)
        maps.append((ORIGINAL_STEP, e))
        try:
            ne = normalize_second_moment(e)
            scores = []
            for k, mk in enumerate(models):
                ek = explain(mk, x, y, method, attribution_stream(seed, s, k), ctx.box)
                maps.append((k, ek))
                scores.append(rho(ne, normalize_second_moment(ek)))
        except DegenerateAttributionError as err:
            return Diagnostic(method.method, s, str(err)), maps
        return MetricCurve(method.method, s, schedule.order.value, scores, names), maps

    results = _map(one, range(len(ctx.inputs)), threads)
    _record(recorder, method, results)
    return _collect([r for r, _ in results], diagnostics)


def smprt(model: Model, dataset, method: MethodConfig, N: int = 50, sigma_rel: float = 0.2,
          order="BottomUp", sim="ssim", seed: int = 0, threads: int = 1,
          diagnostics: list | None = None, recorder: list | None = None) -> list[MetricCurve]:
    """MPRT on explanations averaged over ``N`` Gaussian-perturbed copies of each input.

    The noise std is ``sigma_rel * (x.max() - x.min())`` per sample, and the
    same noisy copies are used for the original and every randomised model.
    """
    if N < 1:
        raise ParameterError("N must be >= 1")
    if sigma_rel < 0:
        raise ParameterError("sigma_rel must be non-negative")
    ctx = _context(model, dataset, seed)
    schedule = make_schedule(model, order, seed)
    models = schedule_models(model, schedule)
    names = [model.layer_name(i) for i in schedule.layers]
    rho = get_similarity(sim)

    def one(s):
        x, y = ctx.inputs[s], int(ctx.targets[s])
        maps = []
        try:
            e = _avg_explanation(model, x, y, method, seed, s, ORIGINAL_STEP, N, sigma_rel, ctx.box)
            maps.append((ORIGINAL_STEP, e))
            ne = normalize_second_moment(e)
            scores = []
            for k, mk in enumerate(models):
                ek = _avg_explanation(mk, x, y, method, seed, s, k, N, sigma_rel, ctx.box)
                maps.append((k, ek))
                scores.append(rho(ne, normalize_second_moment(ek)))
        except DegenerateAttributionError as err:
            return Diagnostic(method.method, s, str(err)), maps
        return MetricCurve(method.method, s, schedule.order.value, scores, names), maps

    results = _map(one, range(len(ctx.inputs)), threads)
    _record(recorder, method, results)
    return _collect([r for r, _ in results], diagnostics)


def emprt_score(xi_original: float, xi_randomized: float) -> float:
    """Relative rise in complexity; undefined (error) when the original entropy is zero."""
    if xi_original == 0:
        raise DegenerateAttributionError("original explanation has zero entropy")
    return (xi_randomized - xi_original) / xi_original


def emprt(model: Model, dataset, method: MethodConfig, spec: HistogramSpec = HistogramSpec(),
          seed: int = 0, with_curve: bool = False, threads: int = 1,
          diagnostics: list | None = None, recorder: list | None = None) -> list[EmprtResult]:
    """Relative change in histogram entropy between the original and the fully randomised model."""
    ctx = _context(model, dataset, seed)
    schedule = make_schedule(model, Order.BOTTOM_UP, seed)
    full = randomize_layers(model, model.param_indices, seed)
    models = schedule_models(model, schedule) if with_curve else None
    last = len(schedule) - 1

    def one(s):
        x, y = ctx.inputs[s], int(ctx.targets[s])
        e = explain(model, x, y, method, attribution_stream(seed, s, ORIGINAL_STEP), ctx.box)
        e_hat = explain(full, x, y, method, attribution_stream(seed, s, last), ctx.box)
        maps = [(ORIGINAL_STEP, e)]
        xi0, xi1 = histogram_entropy(e, spec), histogram_entropy(e_hat, spec)
        try:
            score = emprt_score(xi0, xi1)
        except DegenerateAttributionError as err:
            return Diagnostic(method.method, s, str(err)), maps + [(last, e_hat)]
        res = EmprtResult(method.method, s, xi0, xi1, score)
        if with_curve:
            xi_curve = [xi0]
            ent = [output_entropy(model, x)]
            for k, mk in enumerate(models):
                ek = e_hat if k == last else explain(mk, x, y, method, attribution_stream(seed, s, k), ctx.box)
                maps.append((k, ek))
                xi_curve.append(histogram_entropy(ek, spec))
                ent.append(output_entropy(mk, x))
            res.xi_curve, res.model_entropy_curve = xi_curve, ent
        else:
            maps.append((last, e_hat))
        return res, maps

    results = _map(one, range(len(ctx.inputs)), threads)
    _record(recorder, method, results)
    return _collect([r for r, _ in results], diagnostics)


def final_score(curve: MetricCurve) -> float:
    """Similarity after full randomisation (the last step)."""
    if not curve.step_scores:
        raise ParameterError("empty curve")
    return curve.step_scores[-1]


def mean_curve(curves: list[MetricCurve]) -> tuple[np.ndarray, np.ndarray]:
    scores = np.array([c.step_scores for c in curves], dtype=np.float64)
    return scores.mean(axis=0), scores.std(axis=0)


def curves_auc(curves: list[MetricCurve]) -> float:
    """Area under the mean curve, with steps 1..L on the x-axis."""
    mean, _ = mean_curve(curves)
    if mean.size == 1:
        return float(mean[0])
    return curve_auc(np.arange(1, mean.size + 1), mean)


# ---------------------------------------------------------------- export

def _fmt(v) -> str:
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ParameterError("refusing to export a non-finite score")
        return repr(v)
    return str(v)


def write_rows(path, columns, rows, header: str | None = None) -> None:
    """CSV with an optional leading ``# ...`` provenance line."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        if header:
            f.write(f"# {header}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_rows(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def curve_rows(curves, dataset_name: str, model_id: str):
    for c in curves:
        for k, (name, score) in enumerate(zip(c.layer_names, c.step_scores)):
            yield (dataset_name, model_id, c.method, c.order, c.sample, k, name, float(score))


def write_curves_csv(path, curves, dataset_name: str, model_id: str, header: str | None = None) -> None:
    write_rows(path, CURVE_COLUMNS, curve_rows(curves, dataset_name, model_id), header)


def write_scalars_csv(path, rows, header: str | None = None) -> None:
    """``rows``: iterable of (method, sample, score)."""
    write_rows(path, SCALAR_COLUMNS, ((m, s, float(v)) for m, s, v in rows), header)
