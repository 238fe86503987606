"""Command-line runner: ``train``, ``evaluate``, ``metaeval`` and ``layer-order-report``.

Every subcommand reads an INI config (``--config``) and then applies flag
overrides named ``--<section>-<key>`` (for example ``--metric-order TopDown``).
Outputs go to ``output.dir`` and start with a provenance line naming the tool
version and the config hash.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mprtkit import __version__
from mprtkit import config as cfgmod
from mprtkit.attribution import write_dump
from mprtkit.complexity import HistogramSpec
from mprtkit.config import ExperimentConfig, config_hash
from mprtkit.core import MprtError, NumericError, ParameterError, ShapeError, UnsupportedMethodError
from mprtkit.data import DataError, Dataset, load_idx, normalize, subsample, synth_blobs
from mprtkit.metaeval import HIGHER_IS_BETTER, IPT, MPT, run_meta_evaluation
from mprtkit.metrics import (
    Diagnostic,
    MetricCurve,
    curves_auc,
    emprt,
    mprt,
    smprt,
    write_curves_csv,
    write_rows,
    write_scalars_csv,
)
from mprtkit.nn import checkpoint
from mprtkit.nn.checkpoint import CheckpointError
from mprtkit.nn.model import accuracy
from mprtkit.nn.randomize import Order, make_schedule, schedule_models
from mprtkit.nn.train import TrainLog, train_sgd
from mprtkit.nn.zoo import build_model

log = logging.getLogger("mprtkit")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- shared plumbing

def provenance(cfg: ExperimentConfig, command: str) -> str:
    return f"mprtkit {__version__} config={config_hash(cfg)} command={command}"


def out_dir(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.output.dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def checkpoint_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.model.checkpoint) if cfg.model.checkpoint else Path(cfg.output.dir) / "model.json"


def load_splits(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    d = cfg.dataset
    if d.kind == "synthetic":
        train = synth_blobs(d.n_train, d.n_classes, d.shape, d.separation, d.seed, d.noise, split="train")
        test = synth_blobs(d.n_test, d.n_classes, d.shape, d.separation, d.seed, d.noise, split="test")
    else:
        paths = (d.train_images, d.train_labels, d.test_images, d.test_labels)
        if not all(paths):
            raise DataError("idx dataset needs train/test image and label paths")
        try:
            train = load_idx(d.train_images, d.train_labels, d.n_classes, split="train")
            test = load_idx(d.test_images, d.test_labels, d.n_classes, split="test")
        except OSError as err:
            raise DataError(f"cannot read dataset: {err}") from None
    if d.normalization != "none":
        train = normalize(train, kind=d.normalization)
        test = normalize(test, train.normalization)
    return train, test


def eval_subset(cfg: ExperimentConfig, test: Dataset) -> Dataset:
    n = min(cfg.dataset.n_eval, len(test))
    return subsample(test, n, cfg.dataset.seed)


def load_model(cfg: ExperimentConfig):
    path = checkpoint_path(cfg)
    try:
        model = checkpoint.load(path)
    except OSError as err:
        raise DataError(f"cannot read checkpoint {path}: {err}") from None
    except (ValueError, KeyError) as err:
        raise CheckpointError(f"corrupt checkpoint {path}: {err}") from None
    if model.input_shape != tuple(cfg.dataset.shape) and cfg.dataset.kind == "synthetic":
        raise ShapeError(f"checkpoint input shape {model.input_shape} != dataset shape {cfg.dataset.shape}")
    return model


# ---------------------------------------------------------------- train

def cmd_train(cfg: ExperimentConfig) -> Path:
    out = out_dir(cfg)
    train, test = load_splits(cfg)
    m = cfg.model
    model = build_model(m.arch, train.input_shape, train.num_classes, seed=m.seed)
    hist = TrainLog()
    model = train_sgd(model, train, lr=m.lr, momentum=m.momentum, epochs=m.epochs, seed=m.seed,
                      batch_size=m.batch_size, history=hist)
    path = checkpoint_path(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    checkpoint.save(model, path, meta={"tool": f"mprtkit {__version__}", "config_hash": config_hash(cfg)})
    write_rows(out / "train_log.csv", ("epoch", "loss", "accuracy"),
               zip(hist.epochs, hist.loss, hist.accuracy), provenance(cfg, "train"))
    log.info("trained %s: test accuracy %.4f -> %s", m.arch, accuracy(model, test), path)
    return path


# ---------------------------------------------------------------- evaluate

@dataclass
class MethodOutcome:
    method: str
    curves: list                 # MetricCurve (mprt/smprt) or per-step eMPRT curves
    scalars: list                # (sample, score)
    skips: list                  # Diagnostic


def _emprt_curves(results, names):
    curves = []
    for r in results:
        xi0 = r.xi_curve[0]
        steps = [(xi - xi0) / xi0 for xi in r.xi_curve[1:]]
        curves.append(MetricCurve(r.method, r.sample, Order.BOTTOM_UP.value, steps, names))
    return curves


def run_metric(cfg: ExperimentConfig, model, data: Dataset, method, threads: int = 1,
               order=None, recorder=None) -> MethodOutcome:
    mt = cfg.metric
    diags: list = []
    order = mt.order if order is None else order
    try:
        if mt.metric == "mprt":
            curves = mprt(model, data, method, order=order, sim=mt.similarity, seed=mt.seed,
                          threads=threads, diagnostics=diags, recorder=recorder)
        elif mt.metric == "smprt":
            curves = smprt(model, data, method, N=mt.N, sigma_rel=mt.sigma_rel, order=order,
                           sim=mt.similarity, seed=mt.seed, threads=threads, diagnostics=diags,
                           recorder=recorder)
        else:
            names = [model.layer_name(i) for i in make_schedule(model, Order.BOTTOM_UP, mt.seed).layers]
            res = emprt(model, data, method, HistogramSpec(mt.bins), seed=mt.seed, with_curve=True,
                        threads=threads, diagnostics=diags, recorder=recorder)
            curves = _emprt_curves(res, names)
            return MethodOutcome(method.method, curves, [(r.sample, r.score) for r in res], diags)
    except UnsupportedMethodError as err:
        log.warning("skipping %s: %s", method.method, err)
        return MethodOutcome(method.method, [], [], [Diagnostic(method.method, -1, str(err))])
    return MethodOutcome(method.method, curves, [(c.sample, c.scalar) for c in curves], diags)


def _fmt_stat(v):
    return v if np.isfinite(v) else "NA"


def summarise(cfg: ExperimentConfig, outcomes: list[MethodOutcome]):
    """Summary rows (method, n, mean, std, auc, skipped) and ranking rows (rank, method, mean)."""
    hib = HIGHER_IS_BETTER[cfg.metric.metric]
    summary, means = [], {}
    for o in outcomes:
        s = np.array([v for _, v in o.scalars], dtype=np.float64)
        if s.size:
            mean, std, auc = float(s.mean()), float(s.std()), float(curves_auc(o.curves))
            means[o.method] = mean
        else:
            mean = std = auc = float("nan")
        summary.append((o.method, int(s.size), _fmt_stat(mean), _fmt_stat(std), _fmt_stat(auc), len(o.skips)))
    ranked = sorted(means, key=lambda k: ((-means[k] if hib else means[k]), k))
    ranking = [(f"R{i + 1}", k, means[k]) for i, k in enumerate(ranked)]
    ranking += [("NA", o.method, "NA") for o in outcomes if o.method not in means]
    return summary, ranking


def cmd_evaluate(cfg: ExperimentConfig, threads: int = 1) -> Path:
    out = out_dir(cfg)
    model = load_model(cfg)
    _, test = load_splits(cfg)
    data = eval_subset(cfg, test)
    head = provenance(cfg, "evaluate")
    dataset_name = f"{cfg.dataset.kind}:seed={cfg.dataset.seed}"
    model_id = f"{cfg.model.arch}:seed={cfg.model.seed}"
    recorder = [] if cfg.metric.dump else None
    outcomes = [run_metric(cfg, model, data, mc, threads, recorder=recorder) for mc in cfg.method_configs()]

    curves = [c for o in outcomes for c in o.curves]
    if not curves:
        raise NumericError("every method was skipped")
    write_curves_csv(out / "curves.csv", curves, dataset_name, model_id, head)
    write_scalars_csv(out / "scalars.csv", ((o.method, s, v) for o in outcomes for s, v in o.scalars), head)
    summary, ranking = summarise(cfg, outcomes)
    write_rows(out / "summary.csv", ("method", "n", "mean", "std", "auc", "skipped"), summary, head)
    write_rows(out / "ranking.csv", ("rank", "method", "mean"), ranking, head)
    write_rows(out / "skips.csv", ("method", "sample", "reason"),
               ((d.method, d.sample, d.reason) for o in outcomes for d in o.skips), head)
    if recorder is not None:
        write_dump(out / "attributions.jsonl", recorder)
    return out


# ---------------------------------------------------------------- metaeval

def cmd_metaeval(cfg: ExperimentConfig, threads: int = 1, score_fn=None, higher_is_better=None) -> Path:
    """``score_fn`` replaces the configured metric (used for constructed test metrics)."""
    out = out_dir(cfg)
    model = load_model(cfg)
    _, test = load_splits(cfg)
    data = eval_subset(cfg, test)
    mt = cfg.metric
    params = {"order": mt.order, "N": mt.N, "sigma_rel": mt.sigma_rel, "bins": mt.bins,
              "sim": mt.similarity, "threads": threads}
    methods = cfg.method_configs(cfg.metaeval.methods)
    metric = score_fn if score_fn is not None else mt.metric
    report = run_meta_evaluation(metric, model, data, methods, cfg.meta_config(),
                                 higher_is_better=higher_is_better,
                                 metric_params=None if score_fn is not None else params)
    doc = {"tool": f"mprtkit {__version__}", "config_hash": config_hash(cfg), "config": cfg.to_dict(),
           "report": report.to_dict()}
    with open(out / "metaeval.json", "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(doc, sort_keys=True, indent=1))
    method_set = "+".join(report.method_set)
    rows = [(test, method_set, report.metric, report.results[test].mc, report.results[test].mc_std)
            for test in (IPT, MPT)]
    rows.append(("MC_bar", method_set, report.metric, report.mc_bar, report.mc_bar_std))
    write_rows(out / "metaeval.csv", ("setting", "method_set", "metric", "mc", "mc_std"), rows,
               provenance(cfg, "metaeval"))
    return out


# ---------------------------------------------------------------- layer order

def cmd_layer_order_report(cfg: ExperimentConfig, threads: int = 1) -> Path:
    """Per-method mean curve and AUC for both randomisation orders, with model accuracy per step."""
    out = out_dir(cfg)
    model = load_model(cfg)
    _, test = load_splits(cfg)
    data = eval_subset(cfg, test)
    if cfg.metric.metric == "emprt":
        log.info("layer-order-report compares similarity curves; using mprt for metric emprt")
        cfg = cfgmod.update(cfg, {("metric", "metric"): "mprt"})
    rows = []
    for order in (Order.TOP_DOWN, Order.BOTTOM_UP):
        schedule = make_schedule(model, order, cfg.metric.seed)
        acc = [accuracy(m, test) for m in schedule_models(model, schedule)]
        names = [model.layer_name(i) for i in schedule.layers]
        for mc in cfg.method_configs():
            o = run_metric(cfg, model, data, mc, threads, order=order.value)
            if not o.curves:
                continue
            mean = np.mean([c.step_scores for c in o.curves], axis=0)
            auc = curves_auc(o.curves)
            for k, (name, score) in enumerate(zip(names, mean)):
                rows.append((mc.method, order.value, k, name, float(score), float(acc[k]), float(auc)))
    write_rows(out / "layer_order.csv",
               ("method", "order", "step", "layer_name", "mean_score", "model_accuracy", "auc"),
               rows, provenance(cfg, "layer-order-report"))
    return out


# ---------------------------------------------------------------- argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file (defaults apply to missing keys)")
    p.add_argument("--threads", type=int, default=1, help="worker threads; outputs do not depend on it")
    p.add_argument("--out", help="shorthand for --output-dir")
    p.add_argument("-v", "--verbose", action="store_true")
    for section in cfgmod.SECTIONS:
        g = p.add_argument_group(f"[{section}]")
        for key, kind in cfgmod.field_types(section).items():
            g.add_argument(f"--{section}-{key.replace('_', '-').lower()}", dest=f"cfg__{section}__{key}",
                           metavar=kind.__name__.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mprtkit", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"mprtkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, helptext in [("train", "train a model and write a checkpoint"),
                           ("evaluate", "run a metric and write curve/scalar/summary CSVs"),
                           ("metaeval", "meta-evaluate a metric (IPT/MPT)"),
                           ("layer-order-report", "compare TopDown and BottomUp randomisation")]:
        _add_config_flags(sub.add_parser(name, help=helptext))
    return parser


def config_from_args(args) -> ExperimentConfig:
    cfg = cfgmod.load(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for dest, value in vars(args).items():
        if dest.startswith("cfg__") and value is not None:
            _, section, key = dest.split("__")
            overrides[(section, key)] = value
    if args.out:
        overrides[("output", "dir")] = args.out
    return cfgmod.update(cfg, overrides) if overrides else cfg


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "metaeval": cmd_metaeval,
            "layer-order-report": cmd_layer_order_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        try:
            cfg = config_from_args(args)
        except (ParameterError, OSError) as err:
            raise UsageError(str(err)) from None
        fn = COMMANDS[args.command]
        result = fn(cfg) if fn is cmd_train else fn(cfg, threads=args.threads)
        print(result)
        return EXIT_OK
    except UsageError as err:
        print(f"mprtkit: usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, ShapeError, OSError) as err:
        print(f"mprtkit: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, ArithmeticError) as err:
        print(f"mprtkit: numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ParameterError as err:
        print(f"mprtkit: usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except MprtError as err:
        print(f"mprtkit: numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
