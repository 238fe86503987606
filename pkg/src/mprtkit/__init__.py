"""Model parameter randomisation tests (MPRT, smooth MPRT, efficient MPRT) and
their meta-evaluation, on a small NumPy neural-network stack."""

__version__ = "0.1.0"

from mprtkit._kernels import BACKEND
from mprtkit.attribution import METHODS, Attribution, MethodConfig, attribute, explain, preprocess
from mprtkit.complexity import HistogramSpec, bin_edges, histogram_entropy
from mprtkit.core import RngStream, sample_normal, sample_uniform, tensor
from mprtkit.metrics import EmprtResult, MetricCurve, emprt, final_score, mprt, smprt
from mprtkit.similarity import SsimParams, curve_auc, normalize_second_moment, spearman, ssim
from mprtkit.stats import rankdata, wilcoxon_signed_rank

__all__ = [
    "BACKEND", "METHODS", "Attribution", "MethodConfig", "attribute", "explain", "preprocess",
    "HistogramSpec", "bin_edges", "histogram_entropy", "RngStream", "sample_normal", "sample_uniform",
    "tensor", "EmprtResult", "MetricCurve", "emprt", "final_score", "mprt", "smprt", "SsimParams",
    "curve_auc", "normalize_second_moment", "spearman", "ssim", "rankdata", "wilcoxon_signed_rank",
]
