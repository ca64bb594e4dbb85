import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import ellipse, raster
from sonoptic.core import Region, SegmentationMap
from sonoptic.errors import EmptyHighlight, EmptyRegion, EmptyShadow
from sonoptic.geometry import fold_axial, mask_orientation, mask_stats, orientation_of, region_stats

masks = arrays(np.bool_, st.tuples(st.integers(2, 24), st.integers(2, 24))).filter(lambda m: m.any())


def axial_diff(a, b):
    d = (a - b) % 180.0
    return min(d, 180.0 - d)


def test_single_pixel():
    m = np.zeros((8, 8), bool)
    m[5, 3] = True
    s = mask_stats(m)
    assert s.centroid == (3.0, 5.0)
    assert np.all(s.covariance == 0.0)
    assert s.pixel_count == 1


def test_two_by_two_block():
    m = np.zeros((4, 4), bool)
    m[0:2, 0:2] = True
    s = mask_stats(m)
    assert s.centroid == (0.5, 0.5)
    assert np.array_equal(s.covariance, [[0.25, 0.0], [0.0, 0.25]])


def exact_moments(mask):
    pts = [(Fraction(int(c)), Fraction(int(r))) for r, c in zip(*np.nonzero(mask))]
    n = len(pts)
    mx = sum(p[0] for p in pts) / n
    my = sum(p[1] for p in pts) / n
    cxx = sum((p[0] - mx) ** 2 for p in pts) / n
    cyy = sum((p[1] - my) ** 2 for p in pts) / n
    cxy = sum((p[0] - mx) * (p[1] - my) for p in pts) / n
    return (float(mx), float(my)), np.array([[float(cxx), float(cxy)], [float(cxy), float(cyy)]])


def test_random_blob_matches_exact_pixel_loop():
    rng = np.random.default_rng(11)
    m = np.zeros((40, 40), bool)
    idx = rng.choice(1600, size=200, replace=False)
    m.flat[idx] = True
    s = mask_stats(m)
    centroid, cov = exact_moments(m)
    assert s.centroid == centroid
    assert np.array_equal(s.covariance, cov)


def test_region_stats_errors():
    seg = SegmentationMap(np.zeros((8, 8), np.uint8))
    with pytest.raises(EmptyHighlight):
        region_stats(seg, Region.HIGHLIGHT)
    with pytest.raises(EmptyShadow):
        region_stats(seg, Region.SHADOW)
    assert issubclass(EmptyHighlight, EmptyRegion)


def test_horizontal_bar():
    m = np.zeros((20, 40), bool)
    m[8:12, 10:30] = True
    o = mask_orientation(m)
    assert o.angle_deg == 0.0
    assert not o.isotropic


def test_rotated_bar():
    bar = lambda u, v: (np.abs(u) <= 10) & (np.abs(v) <= 2)
    o = mask_orientation(raster((64, 64), bar, (31.5, 31.5), 30.0))
    assert abs(o.angle_deg - 30.0) <= 2.0


def test_disc_is_isotropic():
    o = mask_orientation(raster((41, 41), ellipse(15, 15), (20, 20)))
    assert o.isotropic
    assert o.angle_deg == 0.0


def test_zero_covariance_is_isotropic():
    o = mask_orientation(np.eye(1, dtype=bool).reshape(1, 1))
    assert o.isotropic and o.angle_deg == 0.0


def test_angle_convention_up_is_positive():
    # a line rising to the right in the displayed image
    m = np.zeros((20, 20), bool)
    for i in range(15):
        m[17 - i, 2 + i] = True
    assert abs(mask_orientation(m).angle_deg - 45.0) < 1e-9


@pytest.mark.parametrize("delta", range(15, 180, 15))
def test_rotation_equivariance(delta):
    shape = ellipse(16, 5)
    base = mask_orientation(raster((64, 64), shape, (31.3, 32.1), 7.0)).angle_deg
    turned = mask_orientation(raster((64, 64), shape, (31.3, 32.1), 7.0 + delta)).angle_deg
    assert axial_diff(turned, base + delta) <= 3.0


@settings(max_examples=60, deadline=None)
@given(masks, st.integers(0, 40), st.integers(0, 40))
def test_translation_invariance_is_bit_exact(mask, dr, dc):
    big = np.zeros((mask.shape[0] + dr, mask.shape[1] + dc), bool)
    big[dr:, dc:] = mask
    a, b = mask_stats(mask), mask_stats(big)
    assert np.array_equal(a.covariance, b.covariance)
    assert orientation_of(a) == orientation_of(b)


@pytest.mark.parametrize("angle", [0.0, 20.0, 65.0, 110.0, 160.0])
def test_upsampling(angle):
    m = raster((48, 48), ellipse(15, 6), (23.7, 24.2), angle)
    up = np.kron(m, np.ones((2, 2), bool))
    a, b = mask_stats(m), mask_stats(up)
    assert axial_diff(orientation_of(a).angle_deg, orientation_of(b).angle_deg) <= 2.0
    assert np.linalg.norm(b.covariance - 4 * a.covariance) <= 0.1 * np.linalg.norm(4 * a.covariance)


@settings(max_examples=80, deadline=None)
@given(masks)
def test_eigenpair_residual(mask):
    s = mask_stats(mask)
    o = orientation_of(s)
    assert o.major_eigenvalue >= o.minor_eigenvalue >= 0.0
    assert 0.0 <= o.angle_deg < 180.0
    if o.isotropic:
        return
    cov = np.array(s.covariance)
    cov[0, 1] = cov[1, 0] = -cov[0, 1]  # up-positive frame
    t = math.radians(o.angle_deg)
    v = np.array([math.cos(t), math.sin(t)])
    assert np.linalg.norm(cov @ v - o.major_eigenvalue * v) <= 1e-9 * o.major_eigenvalue


def test_covariance_is_symmetric_psd():
    rng = np.random.default_rng(2)
    for _ in range(20):
        m = rng.random((15, 15)) < 0.3
        c = mask_stats(m).covariance
        assert c[0, 1] == c[1, 0]
        assert np.linalg.eigvalsh(c).min() >= -1e-12


@pytest.mark.parametrize("value, folded", [(40, 40), (-160, 20), (170, -10), (90, 90), (-90, 90), (270, 90), (0, 0)])
def test_fold_axial(value, folded):
    assert fold_axial(value) == folded
