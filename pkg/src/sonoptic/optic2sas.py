"""Optical ROI -> synthetic SAS highlight/shadow maps.

The chain is: height recovery from shading, rotation of the recovered cloud
onto the SAS highlight orientation, translation to the SAS highlight centre,
hidden-point removal from the sensor position and flat-seabed shadow casting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .core import ImagePair, Modality, PointCloud, Region, RoiImage, SegmentationMap, SensorGeometry, LookDirection
from .errors import EmptyHighlight, InvalidValue, ObjectAboveSensor
from .geometry import RegionStats, fold_axial, orientation_of, region_stats

#: Default maximum recovered height (m) of an optical object.
DEFAULT_HEIGHT_SCALE = 0.45
#: Default flip-radius margin of the hidden-point-removal operator.
HPR_GAMMA = 1.1
#: Flip-radius margin used when rendering SAS maps. The sensor sits hundreds
#: of pixels from a nearly flat cloud; small margins then hide most of the
#: cloud, so a much larger sphere is needed.
RENDER_HPR_GAMMA = 1000.0


@dataclass(frozen=True)
class AlignmentParams:
    theta_sas_deg: float
    theta_opt_deg: float
    delta_deg: float


@dataclass(frozen=True)
class SyntheticSasMaps:
    highlight: np.ndarray
    shadow: np.ndarray

    def __post_init__(self):
        h = np.array(self.highlight, dtype=bool)
        s = np.array(self.shadow, dtype=bool) & ~h
        h.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "highlight", h)
        object.__setattr__(self, "shadow", s)

    @property
    def shape(self):
        return self.highlight.shape

    def to_segmentation(self) -> SegmentationMap:
        return SegmentationMap.from_masks(self.highlight, self.shadow)


def shape_from_shading(roi: RoiImage, seg: SegmentationMap,
                       height_scale: float = DEFAULT_HEIGHT_SCALE) -> PointCloud:
    """Monotone intensity-to-height recovery over the highlight pixels.

    Brighter pixels are taken as higher (overhead illumination). Heights are
    min-max scaled to ``[0, height_scale]``; a highlight of uniform intensity
    becomes a plateau at ``height_scale / 2``. The cloud is centred on the
    highlight centroid in (x, y).
    """
    if roi.modality is not Modality.OPTICAL:
        raise InvalidValue("shape_from_shading expects an optical ROI")
    seg.check_matches(roi)
    mask = seg.highlight
    if not mask.any():
        raise EmptyHighlight("optical highlight region is empty")
    rows, cols = np.nonzero(mask)
    vals = roi.intensities[rows, cols]
    lo, hi = vals.min(), vals.max()
    if hi > lo:
        z = height_scale * (vals - lo) / (hi - lo)
    else:
        z = np.full(vals.shape, 0.5 * height_scale)
    x = cols - cols.mean()
    y = rows - rows.mean()
    return PointCloud(np.column_stack([x, y, z]))


HeightEstimator = Callable[[RoiImage, SegmentationMap, float], PointCloud]


def compute_alignment(sas_seg: SegmentationMap, opt_seg: SegmentationMap) -> AlignmentParams:
    o_sas = orientation_of(region_stats(sas_seg, Region.HIGHLIGHT))
    o_opt = orientation_of(region_stats(opt_seg, Region.HIGHLIGHT))
    if o_sas.isotropic or o_opt.isotropic:
        delta = 0.0
    else:
        delta = fold_axial(o_sas.angle_deg - o_opt.angle_deg)
    return AlignmentParams(o_sas.angle_deg, o_opt.angle_deg, delta)


def align_cloud(cloud: PointCloud, params: AlignmentParams) -> PointCloud:
    """Rotate about the z axis by ``params.delta_deg``.

    With (x, row) pixel coordinates this turns the object's axial angle by
    ``+delta`` in the up-positive angle convention.
    """
    if params.delta_deg == 0.0:
        return cloud
    t = math.radians(params.delta_deg)
    c, s = math.cos(t), math.sin(t)
    rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    return PointCloud(cloud.points @ rot.T)


def position_cloud(cloud: PointCloud, sas_highlight_stats: RegionStats) -> PointCloud:
    mx, my = sas_highlight_stats.centroid
    return PointCloud(cloud.points + np.array([mx, my, 0.0]))


def hpr_mask(points, viewpoint, gamma: float = HPR_GAMMA) -> np.ndarray:
    """Boolean visibility of ``points`` from ``viewpoint`` (spherical flip + convex hull).

    Clouds too small or too flat for a 3-D hull are reported fully visible.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n < 4:
        return np.ones(n, dtype=bool)
    d = pts - np.asarray(viewpoint, dtype=float)
    dist = np.linalg.norm(d, axis=1)
    at_eye = dist == 0.0
    dist[at_eye] = 1.0
    radius = gamma * dist.max()
    flipped = d + (2.0 * (radius - dist) / dist)[:, None] * d
    flipped[at_eye] = 0.0
    try:
        hull = ConvexHull(np.vstack([flipped, np.zeros(3)]))
    except (QhullError, ValueError):
        return np.ones(n, dtype=bool)
    visible = np.zeros(n, dtype=bool)
    idx = hull.vertices[hull.vertices < n]
    visible[idx] = True
    visible |= at_eye
    return visible


def hpr_visible(cloud: PointCloud, viewpoint, gamma: float = HPR_GAMMA) -> PointCloud:
    return PointCloud(cloud.points[hpr_mask(cloud.points, viewpoint, gamma)])


def sensor_viewpoint(cloud: PointCloud, geom: SensorGeometry, width: int) -> np.ndarray:
    """Sensor position in (column, row, height) pixel units.

    The along-track coordinate is taken at the cloud's mean row (broadside).
    """
    if geom.look_direction is LookDirection.LEFT:
        col = (width - 1) + geom.range_origin / geom.pixel_spacing
    else:
        col = -geom.range_origin / geom.pixel_spacing
    row = float(cloud.y.mean()) if len(cloud) else 0.0
    return np.array([col, row, geom.altitude / geom.pixel_spacing])


def cast_shadows(rows, ranges, heights, geom: SensorGeometry, shape) -> np.ndarray:
    """Seabed cells occluded by points at ``(row, ground range, height)``.

    A point at range ``r`` and height ``h`` hides the cells of its row whose
    range lies in ``(r, r + h * r / (A - h)]``.
    """
    h_img, w_img = shape
    shadow = np.zeros(shape, dtype=bool)
    rows = np.asarray(rows, dtype=np.int64)
    ranges = np.asarray(ranges, dtype=float)
    heights = np.asarray(heights, dtype=float)
    keep = (heights > 0) & (rows >= 0) & (rows < h_img)
    if not keep.any():
        return shadow
    rows, ranges, heights = rows[keep], ranges[keep], heights[keep]
    far = ranges + heights * ranges / (geom.altitude - heights)
    col_range = geom.column_range(np.arange(w_img), w_img)
    hidden = (col_range[None, :] > ranges[:, None]) & (col_range[None, :] <= far[:, None])
    for r in np.unique(rows):
        shadow[r] = hidden[rows == r].any(axis=0)
    return shadow


def render_sas_maps(cloud: PointCloud, geom: SensorGeometry, out_dims,
                    hpr_gamma: float = RENDER_HPR_GAMMA) -> SyntheticSasMaps:
    """Binary highlight/shadow maps of a cloud placed in the SAS pixel frame.

    ``out_dims`` is ``(height, width)`` of the paired SAS ROI. Point heights
    are in metres; x/y are pixel coordinates.
    """
    h_img, w_img = int(out_dims[0]), int(out_dims[1])
    highlight = np.zeros((h_img, w_img), dtype=bool)
    if len(cloud) == 0:
        return SyntheticSasMaps(highlight, highlight)
    if np.any(cloud.z >= geom.altitude):
        raise ObjectAboveSensor(
            f"object height {cloud.z.max():.3f} m reaches sensor altitude {geom.altitude} m")

    eye = sensor_viewpoint(cloud, geom, w_img)
    scaled = cloud.points.copy()
    scaled[:, 2] /= geom.pixel_spacing
    vis = cloud.points[hpr_mask(scaled, eye, hpr_gamma)]

    cols = np.rint(vis[:, 0]).astype(np.int64)
    rows = np.rint(vis[:, 1]).astype(np.int64)
    inside = (rows >= 0) & (rows < h_img) & (cols >= 0) & (cols < w_img)
    highlight[rows[inside], cols[inside]] = True

    ranges = geom.column_range(vis[:, 0], w_img)
    shadow = cast_shadows(rows, ranges, vis[:, 2], geom, (h_img, w_img))
    return SyntheticSasMaps(highlight, shadow & ~highlight)


def optic_to_sas(pair: ImagePair, height_scale: float = DEFAULT_HEIGHT_SCALE,
                 sfs: HeightEstimator = shape_from_shading,
                 hpr_gamma: float = RENDER_HPR_GAMMA) -> SyntheticSasMaps:
    """Full optical-to-SAS conversion of one image pair."""
    cloud = sfs(pair.optical, pair.optical_seg, height_scale)
    params = compute_alignment(pair.sas_seg, pair.optical_seg)
    cloud = align_cloud(cloud, params)
    cloud = position_cloud(cloud, region_stats(pair.sas_seg, Region.HIGHLIGHT))
    return render_sas_maps(cloud, pair.geometry, pair.sas.shape, hpr_gamma)
