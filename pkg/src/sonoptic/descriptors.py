"""Shadow/highlight shape descriptors and the 9-component feature vector.

Layout of the vector::

    0  theta_max_deg      angle of the largest orientation sum of the shadow
    1  theta_min_deg      angle of the smallest orientation sum
    2  skew_scale         skewness of the wavelet coefficients, scale marginal
    3  skew_translation   skewness of the wavelet coefficients, translation marginal
    4  hso_deg            highlight/shadow principal-axis angle, folded to [0, 90]
    5-8 hc                unit-norm cubic fit of the highlight's left boundary
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import EmptyHighlight, EmptyShadow, InvalidValue, RankDeficientFit
from .geometry import Orientation, mask_orientation, mask_stats

FEATURE_NAMES = (
    "theta_max_deg", "theta_min_deg", "skew_scale", "skew_translation",
    "hso_deg", "hc0", "hc1", "hc2", "hc3",
)
N_FEATURES = len(FEATURE_NAMES)
#: Indices of axial (180-degree periodic) components.
AXIAL_FEATURES = (0, 1, 4)

N_ANGLES = 180
N_SCALES = 32
HC_ORDER = 3

_ANGLES = np.arange(N_ANGLES)


def _snap(v: float) -> float:
    # sin/cos that are exactly 0, 1/2 or 1 must be exact, or cells lying
    # exactly half a cell off the line fall on either side by rounding
    half = round(2.0 * v) / 2.0
    return half if abs(v - half) < 1e-12 else v


def _sin_deg(t: float) -> float:
    return _snap(math.sin(math.radians(t)))


def _cos_deg(t: float) -> float:
    return _snap(math.cos(math.radians(t)))


_SIN = np.array([_sin_deg(t) for t in range(N_ANGLES)])
_COS = np.array([_cos_deg(t) for t in range(N_ANGLES)])


@dataclass(frozen=True)
class MorletParams:
    bandwidth: float = 1.5
    central_frequency: float = 1.0

    def __post_init__(self):
        if not (self.bandwidth > 0 and self.central_frequency > 0):
            raise InvalidValue("Morlet bandwidth and central frequency must be > 0")


@dataclass(frozen=True)
class OrientationProfile:
    counts: np.ndarray  # raw orientation sums, one per degree
    values: np.ndarray  # counts / max(counts)

    @property
    def angles_deg(self) -> np.ndarray:
        return _ANGLES


@dataclass(frozen=True)
class WaveletFeatures:
    skew_scale: float
    skew_translation: float
    coefficients: np.ndarray  # (N_SCALES, N_ANGLES)


@dataclass(frozen=True)
class FeatureVector:
    theta_max_deg: float
    theta_min_deg: float
    skew_scale: float
    skew_translation: float
    hso_deg: float
    hc: tuple[float, float, float, float]
    shadow_missing: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.theta_max_deg, self.theta_min_deg, self.skew_scale,
                         self.skew_translation, self.hso_deg, *self.hc], dtype=float)

    @classmethod
    def from_array(cls, values, shadow_missing: bool = False) -> "FeatureVector":
        v = [float(x) for x in values]
        if len(v) != N_FEATURES:
            raise InvalidValue(f"feature vector must have {N_FEATURES} entries, got {len(v)}")
        return cls(v[0], v[1], v[2], v[3], v[4], tuple(v[5:9]), shadow_missing)


# ---------------------------------------------------------------------------
# Orientation sum
# ---------------------------------------------------------------------------

def _shadow_coords(shadow):
    shadow = np.asarray(shadow, dtype=bool)
    if not shadow.any():
        raise EmptyShadow("shadow region is empty")
    cx, cy = mask_stats(shadow).centroid
    rows, cols = np.nonzero(shadow)
    return cols - cx, rows - cy


def orientation_sum(shadow, theta_deg: float) -> int:
    """Number of shadow cells on the digital line of angle ``theta_deg`` through the shadow centroid.

    A cell is on the line when the perpendicular distance from its centre to
    the line is below half a cell.
    """
    dx, dy = _shadow_coords(shadow)
    dist = np.abs(dx * _sin_deg(theta_deg) + dy * _cos_deg(theta_deg))
    return int(np.count_nonzero(dist < 0.5))


def orientation_profile(shadow) -> OrientationProfile:
    dx, dy = _shadow_coords(shadow)
    dist = np.abs(dx[None, :] * _SIN[:, None] + dy[None, :] * _COS[:, None])
    counts = np.count_nonzero(dist < 0.5, axis=1)
    peak = counts.max()
    if peak == 0:
        raise EmptyShadow("orientation sum is zero at every angle")
    return OrientationProfile(counts, counts / peak)


def extremal_angles(profile: OrientationProfile) -> tuple[float, float]:
    """Smallest angles attaining the profile maximum and minimum."""
    return float(np.argmax(profile.values)), float(np.argmin(profile.values))


# ---------------------------------------------------------------------------
# Wavelet skewness
# ---------------------------------------------------------------------------

def morlet(t, a, b, params: MorletParams = MorletParams()):
    """Real Morlet atom of scale ``a`` and translation ``b`` evaluated at ``t``."""
    u = (np.asarray(t, dtype=float) - b) / a
    return (1.0 / np.sqrt(params.bandwidth * a)) * np.exp(-0.5 * u * u) \
        * np.cos(2.0 * np.pi * params.central_frequency * u)


def wavelet_scales() -> np.ndarray:
    return 2.0 ** (np.arange(N_SCALES) / 4.0)


@lru_cache(maxsize=8)
def _morlet_bank(params: MorletParams) -> np.ndarray:
    a = wavelet_scales()[:, None, None]
    b = _ANGLES[None, :, None].astype(float)
    t = _ANGLES[None, None, :].astype(float)
    bank = morlet(t, a, b, params)
    bank.setflags(write=False)
    return bank


def skewness(values) -> float:
    """Population skewness ``m3 / m2**1.5``; zero for (numerically) constant input."""
    v = np.asarray(values, dtype=float)
    d = v - v.mean()
    m2 = np.mean(d * d)
    if m2 <= 1e-24 * max(1.0, float(np.mean(v * v))):
        return 0.0
    m3 = np.mean(d * d * d)
    return float(m3 / m2 ** 1.5)


def wavelet_features(profile: OrientationProfile, params: MorletParams = MorletParams()) -> WaveletFeatures:
    """Morlet coefficients of the normalised profile on a fixed 32 x 180 grid.

    Scales are ``2**(k/4)``, ``k = 0..31``; translations are ``0..179`` degrees.
    Each skewness is taken over the coefficient values averaged across the
    other axis.
    """
    coeffs = _morlet_bank(params) @ np.asarray(profile.values, dtype=float)
    return WaveletFeatures(
        skew_scale=skewness(coeffs.mean(axis=1)),
        skew_translation=skewness(coeffs.mean(axis=0)),
        coefficients=coeffs,
    )


# ---------------------------------------------------------------------------
# Highlight/shadow relations
# ---------------------------------------------------------------------------

def hso(theta_shadow: Orientation, theta_highlight: Orientation) -> float:
    """Axial angle between shadow and highlight principal axes, in ``[0, 90]``."""
    if theta_shadow.isotropic or theta_highlight.isotropic:
        return 90.0
    d = abs(theta_shadow.angle_deg - theta_highlight.angle_deg) % 180.0
    return 180.0 - d if d > 90.0 else d


def left_boundary(highlight) -> tuple[np.ndarray, np.ndarray]:
    """Occupied rows and the leftmost highlight column in each."""
    highlight = np.asarray(highlight, dtype=bool)
    occupied = highlight.any(axis=1)
    rows = np.nonzero(occupied)[0]
    cols = np.argmax(highlight[rows], axis=1)
    return rows, cols


def highlight_curvature(highlight, order: int = HC_ORDER) -> np.ndarray:
    """Unit-norm polynomial coefficients (constant term first) of the left highlight edge.

    The edge column is fitted against the row coordinate rescaled to [0, 1].
    The sign is fixed so the first non-negligible coefficient is positive.
    """
    highlight = np.asarray(highlight, dtype=bool)
    if not highlight.any():
        raise EmptyHighlight("highlight region is empty")
    rows, cols = left_boundary(highlight)
    if rows.size < order + 1:
        raise RankDeficientFit(f"{rows.size} highlight rows cannot support an order-{order} fit")
    y = (rows - rows[0]) / (rows[-1] - rows[0])
    vander = np.vander(y, order + 1, increasing=True)
    q, *_ = np.linalg.lstsq(vander, cols.astype(float), rcond=None)
    norm = np.linalg.norm(q)
    if norm == 0.0:
        out = np.zeros(order + 1)
        out[0] = 1.0
        return out
    q = q / norm
    lead = np.nonzero(np.abs(q) > 1e-12)[0][0]
    return -q if q[lead] < 0 else q


def extract_features(highlight, shadow, params: MorletParams = MorletParams()) -> FeatureVector:
    highlight = np.asarray(highlight, dtype=bool)
    shadow = np.asarray(shadow, dtype=bool)
    if not highlight.any():
        raise EmptyHighlight("highlight region is empty")
    hc = tuple(float(v) for v in highlight_curvature(highlight))
    if not shadow.any():
        return FeatureVector(0.0, 0.0, 0.0, 0.0, 90.0, hc, shadow_missing=True)
    profile = orientation_profile(shadow)
    theta_max, theta_min = extremal_angles(profile)
    wav = wavelet_features(profile, params)
    angle = hso(mask_orientation(shadow), mask_orientation(highlight))
    return FeatureVector(theta_max, theta_min, wav.skew_scale, wav.skew_translation, angle, hc)
