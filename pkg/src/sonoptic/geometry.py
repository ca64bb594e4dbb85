"""Second-moment statistics and principal-axis orientation of pixel regions.

Angles follow the usual mathematical convention: measured from the image
x-axis (columns, to the right) towards *up*, i.e. with the pixel row axis
negated. Orientations are axial and reported in ``[0, 180)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Region, SegmentationMap
from .errors import EmptyHighlight, EmptyRegion, EmptyShadow

#: Relative eigenvalue gap below which a region is treated as isotropic.
ISOTROPY_TOL = 0.02


@dataclass(frozen=True)
class RegionStats:
    centroid: tuple[float, float]  # (x, y) = (column, row)
    covariance: np.ndarray  # 2x2, pixel coordinates (x, y)
    pixel_count: int


@dataclass(frozen=True)
class Orientation:
    angle_deg: float
    major_eigenvalue: float
    minor_eigenvalue: float
    isotropic: bool

    @property
    def axis(self) -> np.ndarray:
        """Unit major axis in pixel coordinates ``(dx, drow)``."""
        t = math.radians(self.angle_deg)
        return np.array([math.cos(t), -math.sin(t)])


def mask_stats(mask) -> RegionStats:
    """Centroid and population covariance of the ``True`` pixels of ``mask``.

    Sums are accumulated as exact integers and each moment is formed with a
    single rounding, so the result is the correctly rounded value of the
    exact moments and is bit-identical under integer translation.
    """
    rows, cols = np.nonzero(np.asarray(mask, dtype=bool))
    n = int(rows.size)
    if n == 0:
        raise EmptyRegion("region has no pixels")
    rows = rows.astype(np.int64)
    cols = cols.astype(np.int64)
    sx, sy = int(cols.sum()), int(rows.sum())
    sxx = int((cols * cols).sum())
    syy = int((rows * rows).sum())
    sxy = int((cols * rows).sum())
    nn = n * n
    cxx = (n * sxx - sx * sx) / nn
    cyy = (n * syy - sy * sy) / nn
    cxy = (n * sxy - sx * sy) / nn
    cov = np.array([[cxx, cxy], [cxy, cyy]])
    cov.setflags(write=False)
    return RegionStats((sx / n, sy / n), cov, n)


def region_stats(seg: SegmentationMap, region) -> RegionStats:
    region = Region(region)
    mask = seg.mask(region)
    if not mask.any():
        err = {Region.HIGHLIGHT: EmptyHighlight, Region.SHADOW: EmptyShadow}.get(region, EmptyRegion)
        raise err(f"{region.name.lower()} region is empty")
    return mask_stats(mask)


def orientation_of(stats: RegionStats) -> Orientation:
    """Angle of the major eigenvector of the region covariance.

    The symmetric 2x2 eigenproblem is solved in closed form. Near-isotropic
    regions get angle 0 and ``isotropic=True``.
    """
    a = float(stats.covariance[0, 0])
    c = float(stats.covariance[1, 1])
    b = -float(stats.covariance[0, 1])  # row axis flipped to point up
    mid = 0.5 * (a + c)
    rad = math.hypot(0.5 * (a - c), b)
    major = mid + rad
    minor = max(mid - rad, 0.0)
    if (major - minor) / max(major, 1e-12) < ISOTROPY_TOL:
        return Orientation(0.0, major, minor, True)
    angle = math.degrees(0.5 * math.atan2(2.0 * b, a - c)) % 180.0
    if angle >= 180.0:
        angle = 0.0
    return Orientation(angle, major, minor, False)


def mask_orientation(mask) -> Orientation:
    return orientation_of(mask_stats(mask))


def fold_axial(angle_deg: float) -> float:
    """Fold an axial angle difference into ``(-90, 90]``."""
    d = math.fmod(angle_deg, 180.0)
    if d <= -90.0:
        d += 180.0
    elif d > 90.0:
        d -= 180.0
    return d
