import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sonoptic.core import LABELS, Label, RoiImage, SegmentationMap
from sonoptic.errors import (
    InvalidValue,
    MalformedFile,
    MissingClass,
    RegionTooSmall,
    SingularCovariance,
    ZeroWeights,
)
from sonoptic.fusion import (
    PSI_CAP,
    TransferFunction,
    class_log_densities,
    classify,
    decide,
    fit,
    fusion_weights,
    gaussian_log_density,
    load_model,
    log_density,
    merge_features,
    population_stats,
    quality_index,
    regularise,
    save_model,
)


def _roi_seg(bg_values, echo_values, shape=(8, 8)):
    img = np.zeros(shape)
    lab = np.zeros(shape, np.uint8)
    flat_img, flat_lab = img.ravel(), lab.ravel()
    n_e = len(echo_values)
    flat_img[:n_e] = echo_values
    flat_lab[:n_e] = 255
    flat_img[n_e:n_e + len(bg_values)] = bg_values
    # anything left over is shadow so it does not enter either class
    flat_lab[n_e + len(bg_values):] = 128
    return RoiImage(img, "sas"), SegmentationMap(lab)


# ---------------------------------------------------------------------------
# Quality index
# ---------------------------------------------------------------------------

def test_quality_equal_means_is_zero():
    roi, seg = _roi_seg([0.25, 0.5] * 10, [0.125, 0.625] * 5)
    assert quality_index(roi, seg) == 0.0


def test_quality_known_value():
    # means 0.2 and 0.8, variances 0.01 and 0.01 -> 0.36 / 0.02
    roi, seg = _roi_seg([0.1, 0.3] * 10, [0.7, 0.9] * 5)
    assert quality_index(roi, seg) == pytest.approx(18.0, rel=1e-12)


def test_quality_constant_regions():
    roi, seg = _roi_seg([0.2] * 20, [0.9] * 10)
    assert quality_index(roi, seg) == PSI_CAP
    roi, seg = _roi_seg([0.5] * 20, [0.5] * 10)
    assert quality_index(roi, seg) == 0.0


def test_quality_reference_loop():
    rng = np.random.default_rng(3)
    bg, echo = rng.random(30), 0.5 + 0.5 * rng.random(12)
    roi, seg = _roi_seg(bg, echo)
    mb, me = sum(bg) / len(bg), sum(echo) / len(echo)
    vb = sum((v - mb) ** 2 for v in bg) / len(bg)
    ve = sum((v - me) ** 2 for v in echo) / len(echo)
    assert quality_index(roi, seg) == pytest.approx((mb - me) ** 2 / (vb + ve), rel=1e-12)


def test_quality_needs_two_pixels_each():
    roi, seg = _roi_seg([0.2] * 20, [0.9])
    with pytest.raises(RegionTooSmall):
        quality_index(roi, seg)


# ---------------------------------------------------------------------------
# Transfer functions
# ---------------------------------------------------------------------------

def test_transfer_boundaries():
    tf = TransferFunction(1.0, 4.0, 0.2, 0.5, 0.9)
    assert [tf(v) for v in (0.0, 0.999, 1.0, 3.999, 4.0, 1e9)] == [0.2, 0.2, 0.5, 0.5, 0.9, 0.9]


@settings(max_examples=80, deadline=None)
@given(st.floats(0, 100), st.floats(0, 100))
def test_transfer_is_monotone(p, q):
    tf = TransferFunction(0.3, 3.0, 0.1, 0.25, 0.3)
    lo, hi = sorted((p, q))
    assert tf(lo) <= tf(hi)


@pytest.mark.parametrize("args", [(3.0, 3.0, 0.1, 0.2, 0.3), (1.0, 2.0, 0.5, 0.2, 0.3), (1.0, 2.0, 0.1, 0.2, 1.3)])
def test_transfer_validation(args):
    with pytest.raises(InvalidValue):
        TransferFunction(*args)


# ---------------------------------------------------------------------------
# Merging
# ---------------------------------------------------------------------------

def _vec(theta_max=0.0, theta_min=0.0, hso=0.0, rest=0.0):
    return np.array([theta_max, theta_min, rest, rest, hso, rest, rest, rest, rest])


def test_axial_merge_wraps():
    out = merge_features(_vec(170.0, 20.0), _vec(10.0, 40.0), 1.0, 1.0)
    assert min(out[0], 180.0 - out[0]) <= 1e-9
    assert out[1] == pytest.approx(30.0, abs=1e-9)


def test_hso_stays_folded():
    out = merge_features(_vec(hso=80.0), _vec(hso=88.0), 1.0, 1.0)
    assert 0.0 <= out[4] <= 90.0
    assert out[4] == pytest.approx(84.0, abs=1e-9)


def test_linear_components_are_convex_combination():
    out = merge_features(_vec(rest=1.0), _vec(rest=4.0), 2.0, 1.0)
    assert np.allclose(out[[2, 3, 5, 6, 7, 8]], 2.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 9, elements=st.floats(0, 179.9)), arrays(np.float64, 9, elements=st.floats(0, 179.9)),
       st.floats(0.01, 10))
def test_zero_weight_reproduces_input(ts, to, w):
    assert np.array_equal(merge_features(ts, to, w, 0.0), ts)
    assert np.array_equal(merge_features(ts, to, 0.0, w), to)


def test_zero_weights_rejected():
    with pytest.raises(ZeroWeights):
        merge_features(_vec(), _vec(), 0.0, 0.0)
    with pytest.raises(ZeroWeights):
        merge_features(_vec(), _vec(), -1.0, 2.0)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def _toy(n=6, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    labels = [lab for lab in LABELS for _ in range(n)]
    offsets = np.repeat(np.arange(4.0), n)[:, None] * 3.0
    ts = rng.normal(size=(4 * n, dim)) + offsets
    to = rng.normal(size=(4 * n, dim)) * 2.0 + offsets
    return ts, to, labels


def test_two_point_class_variance():
    ts = np.array([[0.0], [2.0]] * 4)
    labels = ["M", "M", "C", "C", "N", "N", "U", "U"]
    model = fit(ts, ts, labels, ridge=1e-3)
    stats = model.stats("M")
    assert stats.mean_sas.tolist() == [1.0]
    assert stats.cov_sas[0, 0] == pytest.approx(1.001, abs=1e-15)


def test_fit_matches_loop_oracle():
    ts, to, labels = _toy()
    model = fit(ts, to, labels, ridge=1e-3)
    for lab in LABELS:
        rows = [i for i, v in enumerate(labels) if v is lab]
        x = ts[rows]
        mean = [sum(x[:, j]) / len(rows) for j in range(x.shape[1])]
        cov = np.array([[sum((x[i, a] - mean[a]) * (x[i, b] - mean[b]) for i in range(len(rows))) / len(rows)
                         for b in range(x.shape[1])] for a in range(x.shape[1])])
        cov += 1e-3 * np.diag(np.diag(cov))
        st_ = model.stats(lab)
        assert np.max(np.abs(st_.mean_sas - mean)) <= 1e-10
        assert np.max(np.abs(st_.cov_sas - cov)) <= 1e-10
        assert st_.n_sas == st_.n_opt == len(rows)


def test_fit_missing_class():
    ts, to, labels = _toy()
    labels = [Label.M if lab is Label.U else lab for lab in labels]
    with pytest.raises(MissingClass):
        fit(ts, to, labels)


def test_fit_shape_mismatch():
    ts, to, labels = _toy()
    with pytest.raises(InvalidValue):
        fit(ts, to[:-1], labels)


def test_regularise_inflates_variances():
    cov = np.array([[4.0, 1.0], [1.0, 0.0]])
    out = regularise(cov, 0.1)
    assert out[0, 0] == pytest.approx(4.4)
    assert out[0, 1] == 1.0
    assert out[1, 1] > 0.0


def test_population_stats_divides_by_n():
    mean, cov = population_stats([[0.0], [2.0]])
    assert mean.tolist() == [1.0] and cov.tolist() == [[1.0]]


# ---------------------------------------------------------------------------
# Densities and decisions
# ---------------------------------------------------------------------------

def test_one_dimensional_log_density():
    assert gaussian_log_density([2.0], [0.0], [[1.0]]) == pytest.approx(-2.918938533204673, abs=1e-14)
    assert gaussian_log_density([0.0], [0.0], [[1.0]]) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)


def test_log_density_matches_scipy():
    from scipy.stats import multivariate_normal
    rng = np.random.default_rng(2)
    a = rng.normal(size=(5, 5))
    cov = a @ a.T + np.eye(5)
    mean, t = rng.normal(size=5), rng.normal(size=(7, 5))
    ref = multivariate_normal(mean, cov).logpdf(t)
    assert np.max(np.abs(gaussian_log_density(t, mean, cov) - ref)) <= 1e-10


def test_singular_covariance():
    with pytest.raises(SingularCovariance):
        gaussian_log_density([0.0, 0.0], [0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]])


def test_ties_go_to_earliest_class():
    assert decide([1.0, 1.0, 1.0, 1.0]).tolist() == [0]
    assert decide([0.0, 2.0, 2.0, 1.0]).tolist() == [1]


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, 4, elements=st.sampled_from([-3.0, -1.0, 0.0, 0.5, 2.0])))
def test_decision_is_pairwise_rule(logp):
    # class i wins iff it beats every earlier class strictly and every later class at least weakly
    winners = [i for i in range(4)
               if all(logp[i] > logp[j] for j in range(i)) and all(logp[i] >= logp[j] for j in range(i + 1, 4))]
    assert winners == [int(decide(logp)[0])]


def test_weights_are_scale_free():
    ts, to, labels = _toy()
    model = fit(ts, to, labels)
    a = classify(model, ts[3], to[3], 0, 0, w_sas=0.4, w_opt=0.1)
    b = classify(model, ts[3], to[3], 0, 0, w_sas=4.0, w_opt=1.0)
    assert np.allclose(a.log_densities, b.log_densities, rtol=0, atol=1e-12)
    assert a.label is b.label


def test_single_modality_weights_reduce_to_plain_gaussian():
    ts, to, labels = _toy()
    model = fit(ts, to, labels)
    for lab in LABELS:
        s = model.stats(lab)
        assert log_density(model, lab, ts[0], 1.0, 0.0) == gaussian_log_density(ts[0], s.mean_sas, s.cov_sas)
        assert log_density(model, lab, to[0], 0.0, 1.0) == gaussian_log_density(to[0], s.mean_opt, s.cov_opt)


def test_merged_covariance_formula():
    ts, to, labels = _toy()
    model = fit(ts, to, labels)
    s = model.stats("N")
    mean, cov = s.merged(0.75, 0.25)
    assert np.allclose(mean, 0.75 * s.mean_sas + 0.25 * s.mean_opt, atol=1e-14)
    assert np.allclose(cov, 0.5625 * s.cov_sas + 0.0625 * s.cov_opt, atol=1e-14)


def test_batch_equals_single_calls():
    ts, to, labels = _toy()
    model = fit(ts, to, labels)
    w = np.linspace(0.1, 1.0, len(ts))
    batch = class_log_densities(model, ts, to, w, 1.0 - w + 0.05)
    for i in range(len(ts)):
        one = classify(model, ts[i], to[i], 0, 0, w_sas=w[i], w_opt=1.0 - w[i] + 0.05)
        assert np.allclose(one.log_densities, batch[i], rtol=0, atol=1e-10)


def test_fusion_modes():
    ts, to, labels = _toy()
    model = fit(ts, to, labels)
    assert fusion_weights(model, 0.0, 0.0, "sas-only") == (1.0, 0.0)
    assert fusion_weights(model, 0.0, 0.0, "optic-only") == (0.0, 1.0)
    assert fusion_weights(model, 0.0, 0.0, "average-merge") == (0.5, 0.5)
    assert fusion_weights(model, 10.0, 0.0, "fused") == (0.65, 0.1)
    with pytest.raises(InvalidValue):
        fusion_weights(model, 0.0, 0.0, "best")


def test_ridge_choice_barely_moves_decisions(small_table):
    y = small_table.label_indices()
    labels = [LABELS[i] for i in y]
    preds = []
    for ridge in (1e-2, 1e-3, 1e-4):
        model = fit(small_table.t_sas, small_table.t_opt, labels, ridge=ridge)
        logp = class_log_densities(model, small_table.t_sas, small_table.t_opt,
                                   np.full(len(y), 0.6), np.full(len(y), 0.25))
        preds.append(decide(logp))
    assert np.mean(preds[0] == preds[1]) >= 0.9
    assert np.mean(preds[2] == preds[1]) >= 0.9


def test_model_json_round_trip_is_exact(tmp_path):
    ts, to, labels = _toy(seed=7)
    model = fit(ts, to, labels, ridge=3e-3, transfer_sas=TransferFunction(0.1, 2.0, 0.3, 0.4, 0.5))
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert back.ridge == model.ridge and back.transfer_sas == model.transfer_sas
    for a, b in zip(model.classes, back.classes):
        assert a.label is b.label
        for name in ("mean_sas", "mean_opt", "cov_sas", "cov_opt"):
            assert np.array_equal(getattr(a, name), getattr(b, name))
    save_model(back, tmp_path / "again.json")
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "again.json").read_bytes()


def test_model_format_checks(tmp_path):
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(MalformedFile):
        load_model(tmp_path / "bad.json")
    (tmp_path / "v.json").write_text('{"format_version": 99}')
    with pytest.raises(MalformedFile):
        load_model(tmp_path / "v.json")
