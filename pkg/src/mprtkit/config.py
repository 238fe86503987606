"""Experiment configuration as an INI document.

Grammar: ``[section]`` headers followed by ``key = value`` lines; ``#`` and
``;`` start comments. Sections are ``dataset``, ``model``, ``metric``,
``metaeval`` and ``output``. Values are typed by the field they fill:

* int / float: Python literals (floats are written with ``repr``, so they
  round-trip exactly);
* bool: ``true`` / ``false``;
* tuples: comma-separated items;
* strings: raw text (empty means unset).

Unknown sections or keys are rejected. The config hash is a SHA-256 over the
canonical serialisation of every section except ``output``, so moving the
output directory does not change provenance.
"""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import asdict, dataclass, field, fields, replace

from mprtkit.attribution import METHODS, MethodConfig
from mprtkit.core import ParameterError
from mprtkit.metaeval import AR, IPT, MPT, NR, HIGHER_IS_BETTER, MetaConfig, PerturbationConfig
from mprtkit.nn.randomize import Order
from mprtkit.nn.zoo import ARCHITECTURES
from mprtkit.similarity import SIMILARITIES

DEFAULT_METHODS = ("Gradient", "Saliency", "GuidedBackprop", "InputXGradient", "IntegratedGradients",
                   "SmoothGrad", "LRPEpsilon", "LRPZPlus", "GradCAM", "GradientSHAP", "Random")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "synthetic"          # synthetic | idx
    n_classes: int = 10
    shape: tuple = (1, 16, 16)
    n_train: int = 100               # synthetic: per class
    n_test: int = 50                 # synthetic: per class
    separation: float = 8.0
    noise: float = 1.0
    seed: int = 0
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    normalization: str = "standard"  # standard | minmax | none
    n_eval: int = 20                 # test samples explained by evaluate / metaeval


@dataclass(frozen=True)
class ModelSpec:
    arch: str = "toy_cnn"
    seed: int = 0
    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 15
    batch_size: int = 32
    checkpoint: str = ""             # default: <output.dir>/model.json


@dataclass(frozen=True)
class MetricSpec:
    metric: str = "mprt"
    methods: tuple = DEFAULT_METHODS
    order: str = "BottomUp"
    N: int = 50
    sigma_rel: float = 0.2
    bins: int = 100
    similarity: str = "ssim"
    seed: int = 0
    ig_steps: int = 20
    sg_samples: int = 20
    sg_noise: float = 0.1
    shap_samples: int = 5
    lrp_epsilon: float = 1e-6
    dump: bool = False


@dataclass(frozen=True)
class MetaSpec:
    methods: tuple = ("Gradient", "Saliency", "IntegratedGradients", "GradientSHAP", "Random")
    K: int = 5
    iterations: int = 3
    seed: int = 0
    ipt_nr: float = 0.001            # IPT noise ~ U(-a, a)
    ipt_ar: float = 2.0
    mpt_nr: float = 0.001            # MPT weights *= N(1, s)
    mpt_ar: float = 2.0


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "out"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    metric: MetricSpec = field(default_factory=MetricSpec)
    metaeval: MetaSpec = field(default_factory=MetaSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        return {name: _plain(asdict(getattr(self, name))) for name in SECTIONS}

    def method_configs(self, names=None) -> list[MethodConfig]:
        m = self.metric
        return [MethodConfig(n, ig_steps=m.ig_steps, sg_samples=m.sg_samples, sg_noise=m.sg_noise,
                             lrp_epsilon=m.lrp_epsilon, shap_samples=m.shap_samples)
                for n in (m.methods if names is None else names)]

    def meta_config(self) -> MetaConfig:
        e = self.metaeval
        return MetaConfig(K=e.K, iterations=e.iterations, seed=e.seed, perturbations={
            (IPT, NR): PerturbationConfig(IPT, NR, alpha=-e.ipt_nr, beta=e.ipt_nr),
            (IPT, AR): PerturbationConfig(IPT, AR, alpha=-e.ipt_ar, beta=e.ipt_ar),
            (MPT, NR): PerturbationConfig(MPT, NR, mu=1.0, sigma=e.mpt_nr),
            (MPT, AR): PerturbationConfig(MPT, AR, mu=1.0, sigma=e.mpt_ar),
        })


SECTIONS = {"dataset": DatasetSpec, "model": ModelSpec, "metric": MetricSpec,
            "metaeval": MetaSpec, "output": OutputSpec}


def _plain(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def validate(cfg: ExperimentConfig) -> None:
    d, m, mt, e = cfg.dataset, cfg.model, cfg.metric, cfg.metaeval
    if d.kind not in ("synthetic", "idx"):
        raise ParameterError(f"dataset.kind must be synthetic or idx, got {d.kind!r}")
    if d.normalization not in ("standard", "minmax", "none"):
        raise ParameterError(f"unknown normalisation {d.normalization!r}")
    if min(d.n_classes, d.n_train, d.n_test, d.n_eval) < 1:
        raise ParameterError("dataset counts must be positive")
    if m.arch not in ARCHITECTURES:
        raise ParameterError(f"unknown architecture {m.arch!r}")
    if m.epochs < 0 or m.lr < 0 or m.batch_size < 1:
        raise ParameterError("invalid training hyper-parameters")
    if mt.metric not in HIGHER_IS_BETTER:
        raise ParameterError(f"unknown metric {mt.metric!r}")
    for name in tuple(mt.methods) + tuple(e.methods):
        if name not in METHODS:
            raise ParameterError(f"unknown attribution method {name!r}")
    if not mt.methods:
        raise ParameterError("metric.methods is empty")
    Order.parse(mt.order)
    if mt.similarity not in SIMILARITIES:
        raise ParameterError(f"unknown similarity {mt.similarity!r}")
    if mt.N < 1 or mt.sigma_rel < 0 or mt.bins < 2:
        raise ParameterError("invalid metric parameters")
    if e.K < 2 or e.iterations < 1:
        raise ParameterError("metaeval needs K >= 2 and iterations >= 1")
    if not (0 <= e.ipt_nr < e.ipt_ar and 0 <= e.mpt_nr < e.mpt_ar):
        raise ParameterError("NR magnitudes must be below AR magnitudes")


# ---------------------------------------------------------------- (de)serialisation

def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    return str(v)


def _parse_scalar(text: str, kind):
    text = text.strip()
    if kind is bool:
        if text.lower() in ("true", "yes", "1", "on"):
            return True
        if text.lower() in ("false", "no", "0", "off"):
            return False
        raise ParameterError(f"not a boolean: {text!r}")
    try:
        return kind(text)
    except ValueError:
        raise ParameterError(f"cannot parse {text!r} as {kind.__name__}") from None


def _parse(text: str, default):
    if isinstance(default, tuple):
        kind = type(default[0]) if default else str
        return tuple(_parse_scalar(t, kind) for t in text.split(",") if t.strip())
    return _parse_scalar(text, type(default))


def dumps(cfg: ExperimentConfig, sections=None) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name in sections or SECTIONS:
        spec = getattr(cfg, name)
        parser[name] = {f.name: _format(getattr(spec, f.name)) for f in fields(spec)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _section_defaults(cls):
    return {f.name: getattr(cls(), f.name) for f in fields(cls)}


def update(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply ``{(section, key): text}`` overrides, parsing text by field type."""
    parts = {name: getattr(cfg, name) for name in SECTIONS}
    for (section, key), text in overrides.items():
        if section not in SECTIONS:
            raise ParameterError(f"unknown config section [{section}]")
        defaults = _section_defaults(SECTIONS[section])
        if key not in defaults:
            raise ParameterError(f"unknown key {key!r} in [{section}]")
        value = text if not isinstance(text, str) else _parse(text, defaults[key])
        parts[section] = replace(parts[section], **{key: value})
    return ExperimentConfig(**parts)


def loads(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ParameterError(f"malformed config: {err}") from None
    overrides = {}
    for section in parser.sections():
        for key, value in parser[section].items():
            overrides[(section, key)] = value
    return update(ExperimentConfig(), overrides)


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as f:
        return loads(f.read())


def save(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(cfg))


def config_hash(cfg: ExperimentConfig) -> str:
    text = dumps(cfg, [s for s in SECTIONS if s != "output"])
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def field_types(section: str) -> dict:
    return {k: type(v) for k, v in _section_defaults(SECTIONS[section]).items()}


__all__ = ["ExperimentConfig", "DatasetSpec", "ModelSpec", "MetricSpec", "MetaSpec", "OutputSpec",
           "SECTIONS", "config_hash", "dumps", "field_types", "load", "loads", "save", "update",
           "validate"]
