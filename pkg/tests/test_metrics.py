import numpy as np
import pytest

import mprtkit.metrics as M
from mprtkit.attribution import MethodConfig
from mprtkit.complexity import HistogramSpec, histogram_entropy
from mprtkit.core import DegenerateAttributionError, ParameterError
from mprtkit.metrics import (
    MetricCurve,
    curves_auc,
    emprt,
    emprt_score,
    final_score,
    mean_curve,
    mprt,
    read_rows,
    smprt,
    write_curves_csv,
    write_scalars_csv,
)
from mprtkit.nn import toy_cnn
from mprtkit.similarity import normalize_second_moment, ssim

from conftest import linear_model, random_inputs, two_conv_net

FAST = [MethodConfig("Gradient"), MethodConfig("SmoothGrad", sg_samples=3), MethodConfig("LRPZPlus"),
        MethodConfig("GradCAM"), MethodConfig("Random"), MethodConfig("GradientSHAP", shap_samples=2)]


@pytest.fixture(scope="module")
def small():
    m = two_conv_net(1)
    return m, random_inputs(6, m.input_shape, 1)


@pytest.mark.parametrize("method", FAST, ids=lambda c: c.method)
def test_smprt_n1_sigma0_equals_mprt_bottom_up(small, method):
    m, X = small
    a = mprt(m, X, method, order="BottomUp", seed=3)
    b = smprt(m, X, method, N=1, sigma_rel=0.0, seed=3)
    assert [c.step_scores for c in a] == [c.step_scores for c in b]


def test_smprt_linear_model_noise_irrelevant_for_gradient():
    W = np.random.default_rng(0).normal(size=(3, 49))
    m = linear_model(W)
    X = random_inputs(4, (49,), 2)
    one = smprt(m, X, MethodConfig("Gradient"), N=1, sim="spearman")
    many = smprt(m, X, MethodConfig("Gradient"), N=25, sim="spearman")
    for a, b in zip(one, many):
        np.testing.assert_allclose(a.step_scores, b.step_scores, rtol=1e-12)


def test_random_method_near_independence_baseline():
    m = toy_cnn((1, 32, 32), 4, seed=0)
    X = random_inputs(50, m.input_shape, 5)
    curves = mprt(m, X, MethodConfig("Random"))
    assert abs(np.mean([c.step_scores for c in curves])) < 0.15


def test_constant_attribution_double_scores_one(small, monkeypatch):
    m, X = small
    monkeypatch.setattr(M, "explain", lambda model, x, *a, **k: np.full((8, 8), 2.5))
    curves = mprt(m, X, MethodConfig("Gradient"))
    assert all(s == 1.0 for c in curves for s in c.step_scores)


def test_gradient_decays_on_trained_toy(toy):
    model, _, test = toy
    curves = mprt(model, test.take(range(100)), MethodConfig("Gradient"), order="BottomUp")
    scores = np.array([c.step_scores for c in curves])
    assert scores[:, -1].mean() < scores[:, 0].mean()


def test_curve_structure_and_orders(small):
    m, X = small
    td = mprt(m, X, MethodConfig("Gradient"), order="TopDown")
    bu = mprt(m, X, MethodConfig("Gradient"), order="BottomUp")
    assert td[0].layer_names == ["8:Dense", "6:Dense", "3:Conv2d", "0:Conv2d"]
    assert bu[0].layer_names == list(reversed(td[0].layer_names))
    assert all(len(c.step_scores) == 4 for c in td + bu)
    assert td[0].order == "TopDown" and bu[0].order == "BottomUp"
    # after the full schedule both orders reach the same model
    assert td[0].step_scores[-1] == bu[0].step_scores[-1]
    assert td[0].step_scores[0] != bu[0].step_scores[0]


def test_thread_count_does_not_change_results(small):
    m, X = small
    for cfg in (MethodConfig("SmoothGrad", sg_samples=3), MethodConfig("Random")):
        a = mprt(m, X, cfg, threads=1)
        b = mprt(m, X, cfg, threads=3)
        assert [c.step_scores for c in a] == [c.step_scores for c in b]
    e1 = emprt(m, X, MethodConfig("Random"), threads=1)
    e2 = emprt(m, X, MethodConfig("Random"), threads=4)
    assert [r.score for r in e1] == [r.score for r in e2]


def test_degenerate_sample_is_recorded_and_skipped():
    m = linear_model(np.zeros((2, 9)))
    diags = []
    out = mprt(m, random_inputs(3, (9,)), MethodConfig("Gradient"), sim="spearman", diagnostics=diags)
    assert out == [] and len(diags) == 3 and diags[0].method == "Gradient"


def test_recorder_replay(small):
    m, X = small
    rec = []
    curves = mprt(m, X, MethodConfig("Saliency"), recorder=rec)
    maps = {(s, k): e for s, _, k, e in rec}
    for c in curves:
        e0 = normalize_second_moment(maps[(c.sample, M.ORIGINAL_STEP)])
        last = len(c.step_scores) - 1
        assert final_score(c) == ssim(e0, normalize_second_moment(maps[(c.sample, last)]))


def test_emprt_score_arithmetic():
    assert emprt_score(2.0, 2.0) == 0.0
    assert emprt_score(2.0, 3.0) == 0.5
    assert emprt_score(4.0, 2.0) == -0.5
    with pytest.raises(DegenerateAttributionError):
        emprt_score(0.0, 1.0)


def test_emprt_result_fields(small):
    m, X = small
    res = emprt(m, X, MethodConfig("Gradient"), HistogramSpec(50), with_curve=True)
    for r in res:
        assert r.score == (r.xi_randomized - r.xi_original) / r.xi_original
        assert (r.score > 0) == (r.xi_randomized > r.xi_original)
        assert len(r.xi_curve) == len(m.param_indices) + 1
        assert r.xi_curve[0] == r.xi_original and r.xi_curve[-1] == r.xi_randomized
        assert len(r.model_entropy_curve) == len(r.xi_curve)
        assert all(0 <= h <= np.log2(m.num_classes) + 1e-12 for h in r.model_entropy_curve)
    plain = emprt(m, X, MethodConfig("Gradient"), HistogramSpec(50))
    assert [r.score for r in plain] == [r.score for r in res] and plain[0].xi_curve is None


def test_emprt_constant_attribution_is_skipped(small, monkeypatch):
    m, X = small
    monkeypatch.setattr(M, "explain", lambda *a, **k: np.zeros((8, 8)))
    diags = []
    assert emprt(m, X, MethodConfig("Gradient"), diagnostics=diags) == []
    assert len(diags) == len(X)
    assert histogram_entropy(np.zeros(4)) == 0.0


def test_final_score_and_aggregates():
    c = MetricCurve("G", 0, "BottomUp", [0.9, 0.5, 0.2], ["a", "b", "c"])
    assert final_score(c) == 0.2 and c.scalar == 0.2
    assert final_score(MetricCurve("G", 0, "BottomUp", [0.7], ["a"])) == 0.7
    with pytest.raises(ParameterError):
        final_score(MetricCurve("G", 0, "BottomUp", [], []))
    d = MetricCurve("G", 1, "BottomUp", [0.5, 0.5, 0.0], ["a", "b", "c"])
    mean, std = mean_curve([c, d])
    np.testing.assert_allclose(mean, [0.7, 0.5, 0.1])
    np.testing.assert_allclose(std, [0.2, 0.0, 0.1])
    assert curves_auc([c, d]) == pytest.approx(0.45)  # (0.6 + 0.3) / span 2


def test_metric_parameter_validation(small):
    m, X = small
    with pytest.raises(ParameterError):
        smprt(m, X, MethodConfig("Gradient"), N=0)
    with pytest.raises(ParameterError):
        smprt(m, X, MethodConfig("Gradient"), sigma_rel=-1)
    with pytest.raises(ParameterError):
        mprt(m, X[:0], MethodConfig("Gradient"))


def test_csv_round_trip(tmp_path, small):
    m, X = small
    curves = mprt(m, X, MethodConfig("Gradient"))
    write_curves_csv(tmp_path / "c.csv", curves, "blobs", "net", header="test header")
    assert (tmp_path / "c.csv").read_text().startswith("# test header\n")
    rows = read_rows(tmp_path / "c.csv")
    assert len(rows) == sum(len(c.step_scores) for c in curves)
    assert float(rows[0]["score"]) == curves[0].step_scores[0]
    assert rows[0]["layer_name"] == curves[0].layer_names[0]
    with pytest.raises(ParameterError):
        write_scalars_csv(tmp_path / "s.csv", [("G", 0, float("nan"))])
