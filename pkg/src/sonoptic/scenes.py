"""Seeded synthetic SAS/optical scenes for manta, cylinder and boulder objects.

Objects are height fields on a flat seabed. The SAS ROI is rendered by ray
casting each along-track row from the sensor (visible object cells form the
highlight, occluded cells the shadow); the optical ROI is an overhead
Lambertian rendering of the same object at an independent pose. Both get
additive Gaussian noise, and their segmentations are produced by smoothing
and nearest-level thresholding of the noisy image, so heavy noise degrades
the segmentation the way a real front end would.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import uniform_filter

from .core import ImagePair, Label, LookDirection, Modality, Region, RoiImage, SegmentationMap, SensorGeometry
from .errors import InvalidSpec

ROI_SHAPE = (72, 72)
PIXEL_SPACING = 0.05
BASELINE_NOISE = 0.08
#: Optical noise relative to SAS noise in generated benchmarks.
OPTICAL_NOISE_RATIO = 1.5

# intensity levels of the noiseless renderings
SAS_BACKGROUND, SAS_HIGHLIGHT, SAS_SHADOW = 0.35, 0.63, 0.08
OPT_BACKGROUND, OPT_OBJECT_BASE, OPT_OBJECT_GAIN = 0.35, 0.45, 0.35

# smoothing window of the SAS segmentation front end
SAS_SEGMENT_WINDOW = 5

# boulder footprint: radial bump count, order and amplitude ranges
BOULDER_BUMPS = (3, 7)
BOULDER_BUMP_ORDER = (2, 6)
BOULDER_BUMP_AMPLITUDE = (0.03, 0.12)


class ObjectType(str, enum.Enum):
    MANTA = "manta"
    CYLINDER = "cylinder"
    BOULDER = "boulder"

    @property
    def label(self) -> Label:
        return {ObjectType.MANTA: Label.M, ObjectType.CYLINDER: Label.C, ObjectType.BOULDER: Label.N}[self]


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to render one matched SAS/optical pair.

    ``position`` is the object centre ``(col, row)`` in the SAS ROI and
    ``orientation_deg`` its axis angle there. ``size_m`` is the diameter
    (manta, boulder) or length (cylinder); ``height_m`` the object height
    (the diameter, for a cylinder). The optical view is centred in its ROI
    and turned by ``optical_rotation_deg``.
    """

    object_type: ObjectType
    position: tuple[float, float]
    orientation_deg: float
    size_m: float
    height_m: float
    noise_level: float
    sensor: SensorGeometry
    seed: int
    optical_rotation_deg: float = 0.0
    optical_noise_level: float | None = None
    roi_shape: tuple[int, int] = ROI_SHAPE

    def __post_init__(self):
        object.__setattr__(self, "object_type", ObjectType(self.object_type))
        if not 0 < self.height_m < self.sensor.altitude:
            raise InvalidSpec(f"height {self.height_m} m must lie in (0, altitude={self.sensor.altitude})")
        if self.size_m <= 0:
            raise InvalidSpec("size_m must be > 0")
        if self.noise_level < 0 or (self.optical_noise_level is not None and self.optical_noise_level < 0):
            raise InvalidSpec("noise levels must be >= 0")
        if min(self.roi_shape) < 8:
            raise InvalidSpec("ROI sides must be >= 8 pixels")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidSpec("seed must fit in 64 unsigned bits")

    @property
    def opt_noise(self) -> float:
        return self.noise_level if self.optical_noise_level is None else self.optical_noise_level

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneSpec":
        """Build from JSON-style data; ``sensor`` uses the manifest's geometry keys."""
        try:
            s = doc["sensor"]
            sensor = SensorGeometry(float(s["altitude_m"]), float(s["range_origin_m"]),
                                    float(s.get("pixel_spacing_m", PIXEL_SPACING)),
                                    s.get("look_direction", "right"))
            return cls(
                object_type=ObjectType(doc["object_type"]),
                position=(float(doc["position"][0]), float(doc["position"][1])),
                orientation_deg=float(doc["orientation_deg"]),
                size_m=float(doc["size_m"]),
                height_m=float(doc["height_m"]),
                noise_level=float(doc.get("noise_level", BASELINE_NOISE)),
                sensor=sensor,
                seed=int(doc["seed"]),
                optical_rotation_deg=float(doc.get("optical_rotation_deg", 0.0)),
                optical_noise_level=(None if doc.get("optical_noise_level") is None
                                     else float(doc["optical_noise_level"])),
                roi_shape=tuple(int(v) for v in doc.get("roi_shape", ROI_SHAPE)),
            )
        except (KeyError, TypeError, ValueError) as err:
            if isinstance(err, InvalidSpec):
                raise
            raise InvalidSpec(f"bad scene description: {err!r}") from None


# ---------------------------------------------------------------------------
# Shapes
# ---------------------------------------------------------------------------

def _boulder_bumps(rng: np.random.Generator) -> list[tuple[int, float, float]]:
    n = int(rng.integers(*BOULDER_BUMPS))
    return [(int(rng.integers(*BOULDER_BUMP_ORDER)), float(rng.uniform(*BOULDER_BUMP_AMPLITUDE)),
             float(rng.uniform(0, 2 * np.pi))) for _ in range(n)]


def object_height(spec: SceneSpec, u, v, bumps=None) -> np.ndarray:
    """Height (m) at object-frame coordinates ``u`` (along the axis) and ``v`` (across), in metres."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    kind = spec.object_type
    if kind is ObjectType.MANTA:
        outer = spec.size_m / 2
        top = 0.45 * outer
        rho = np.hypot(u, v)
        ramp = spec.height_m * (outer - rho) / (outer - top)
        return np.clip(np.where(rho <= top, spec.height_m, ramp), 0.0, None)
    if kind is ObjectType.CYLINDER:
        rc = spec.height_m / 2
        inside = (np.abs(u) <= spec.size_m / 2) & (np.abs(v) < rc)
        return np.where(inside, rc + np.sqrt(np.clip(rc * rc - v * v, 0.0, None)), 0.0)
    # boulder: dome over a star-shaped footprint with smooth radial bumps
    rho = np.hypot(u, v)
    phi = np.arctan2(v, u)
    radius = np.full(rho.shape, spec.size_m / 2)
    for k, amp, phase in bumps or ():
        radius = radius * (1.0 + amp * np.cos(k * phi + phase))
    t = np.clip(1.0 - (rho / radius) ** 2, 0.0, None)
    return spec.height_m * np.sqrt(t)


def _local_coords(shape, centre, angle_deg, spacing):
    rows, cols = np.mgrid[0:shape[0], 0:shape[1]].astype(float)
    dx = (cols - centre[0]) * spacing
    dy = -(rows - centre[1]) * spacing
    t = math.radians(angle_deg)
    u = dx * math.cos(t) + dy * math.sin(t)
    v = -dx * math.sin(t) + dy * math.cos(t)
    return u, v


def height_field(spec: SceneSpec, centre, angle_deg, bumps=None) -> np.ndarray:
    u, v = _local_coords(spec.roi_shape, centre, angle_deg, spec.sensor.pixel_spacing)
    return object_height(spec, u, v, bumps)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def raycast_sas(heights: np.ndarray, geom: SensorGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Visible-object (highlight) and occluded (shadow) cells of a height field.

    Each row is traced from the sensor at ground range 0 and altitude ``A``.
    A cell at range ``r`` and height ``h`` is hidden when some nearer cell
    subtends a shallower depression, i.e. ``(A - h')/r' < (A - h)/r``.
    """
    h_img, w_img = heights.shape
    if np.any(heights >= geom.altitude):
        raise InvalidSpec("object reaches the sensor altitude")
    ranges = geom.column_range(np.arange(w_img), w_img)
    order = np.argsort(ranges, kind="stable")
    hs = heights[:, order]
    r = ranges[order]
    depression = (geom.altitude - hs) / r[None, :]
    nearer_min = np.minimum.accumulate(depression, axis=1)
    blocked = np.zeros_like(hs, dtype=bool)
    blocked[:, 1:] = nearer_min[:, :-1] < depression[:, 1:] - 1e-12
    inv = np.empty_like(order)
    inv[order] = np.arange(w_img)
    blocked = blocked[:, inv]
    highlight = (heights > 0) & ~blocked
    return highlight, blocked


def _object_gradient(heights: np.ndarray, inside: np.ndarray, axis: int, spacing: float) -> np.ndarray:
    # central differences, falling back to one-sided ones at the footprint edge
    # so rim pixels are not flattened by the surrounding seabed
    h = np.moveaxis(heights, axis, 0)
    m = np.moveaxis(inside, axis, 0)
    fwd = np.zeros_like(h)
    bwd = np.zeros_like(h)
    fwd[:-1] = (h[1:] - h[:-1]) / spacing
    bwd[1:] = (h[1:] - h[:-1]) / spacing
    has_next = np.zeros_like(m)
    has_prev = np.zeros_like(m)
    has_next[:-1] = m[1:]
    has_prev[1:] = m[:-1]
    g = np.where(has_next & has_prev, 0.5 * (fwd + bwd),
                 np.where(has_next, fwd, np.where(has_prev, bwd, 0.0)))
    return np.moveaxis(g, 0, axis)


def optical_shading(heights: np.ndarray, spacing: float) -> np.ndarray:
    """Overhead-light Lambertian factor ``n_z`` of the height field.

    Slopes on the object are estimated from object cells only.
    """
    heights = np.asarray(heights, dtype=float)
    inside = heights > 0
    gx = _object_gradient(heights, inside, 1, spacing)
    gy = _object_gradient(heights, inside, 0, spacing)
    return 1.0 / np.sqrt(1.0 + gx * gx + gy * gy)


def _segment(noisy: np.ndarray, levels: dict[Region, float], window: int = 3) -> SegmentationMap:
    smooth = uniform_filter(noisy, size=window, mode="nearest")
    regions = list(levels)
    values = np.array([levels[r] for r in regions])
    idx = np.argmin(np.abs(smooth[..., None] - values), axis=-1)
    codes = np.array([r.value for r in regions], dtype=np.uint8)
    return SegmentationMap(codes[idx])


def _noisy(clean: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal(clean.shape)
    return np.clip(clean + sigma * noise, 0.0, 1.0)


def render_sas(spec: SceneSpec, rng: np.random.Generator, bumps=None):
    heights = height_field(spec, spec.position, spec.orientation_deg, bumps)
    highlight, shadow = raycast_sas(heights, spec.sensor)
    clean = np.full(spec.roi_shape, SAS_BACKGROUND)
    clean[shadow] = SAS_SHADOW
    clean[highlight] = SAS_HIGHLIGHT
    noisy = _noisy(clean, spec.noise_level, rng)
    seg = _segment(noisy, {Region.BACKGROUND: SAS_BACKGROUND, Region.SHADOW: SAS_SHADOW,
                           Region.HIGHLIGHT: SAS_HIGHLIGHT}, SAS_SEGMENT_WINDOW)
    return RoiImage(noisy, Modality.SAS), seg


def render_optical(spec: SceneSpec, rng: np.random.Generator, bumps=None):
    centre = ((spec.roi_shape[1] - 1) / 2, (spec.roi_shape[0] - 1) / 2)
    heights = height_field(spec, centre, spec.orientation_deg + spec.optical_rotation_deg, bumps)
    footprint = heights > 0
    clean = np.full(spec.roi_shape, OPT_BACKGROUND)
    shade = optical_shading(heights, spec.sensor.pixel_spacing)
    clean[footprint] = OPT_OBJECT_BASE + OPT_OBJECT_GAIN * shade[footprint]
    noisy = _noisy(clean, spec.opt_noise, rng)
    object_level = float(clean[footprint].mean()) if footprint.any() else 1.0
    seg = _segment(noisy, {Region.BACKGROUND: OPT_BACKGROUND, Region.HIGHLIGHT: object_level})
    return RoiImage(noisy, Modality.OPTICAL), seg


def generate_scene(spec: SceneSpec, pair_id: str = "") -> ImagePair:
    """Render the matched SAS/optical pair described by ``spec`` (deterministic in ``spec.seed``)."""
    rng = np.random.default_rng(spec.seed)
    bumps = _boulder_bumps(rng) if spec.object_type is ObjectType.BOULDER else None
    sas, sas_seg = render_sas(spec, rng, bumps)
    opt, opt_seg = render_optical(spec, rng, bumps)
    if not sas_seg.highlight.any() or not opt_seg.highlight.any():
        raise InvalidSpec("object leaves no highlight in one of the modalities")
    return ImagePair(sas, sas_seg, opt, opt_seg, spec.sensor, spec.object_type.label, pair_id)


def mismatch_pair(sas_source: ImagePair, optical_source: ImagePair, pair_id: str = "") -> ImagePair:
    """SAS half of one scene with the optical half of another; labelled U."""
    return ImagePair(sas_source.sas, sas_source.sas_seg, optical_source.optical,
                     optical_source.optical_seg, sas_source.geometry, Label.U, pair_id)


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkConfig:
    """Recipe for a synthetic benchmark.

    ``n_per_class`` scenes are drawn for each object type; a fraction
    ``mismatch_fraction`` of them is re-paired across types to form the U
    class. Optical noise is ``optical_noise_ratio`` times ``noise_level``
    (turbid water makes the camera the weaker sensor). With
    ``corrupt_factor`` set, one randomly chosen modality of every scene gets
    ``corrupt_factor`` times its baseline noise.
    """

    n_per_class: int = 50
    seed: int = 0
    noise_level: float = BASELINE_NOISE
    mismatch_fraction: float = 0.25
    corrupt_factor: float | None = None
    optical_noise_ratio: float = OPTICAL_NOISE_RATIO

    def __post_init__(self):
        if self.n_per_class < 2:
            raise InvalidSpec("n_per_class must be >= 2")
        if not 0.0 <= self.mismatch_fraction < 1.0:
            raise InvalidSpec("mismatch_fraction must be in [0, 1)")
        if self.noise_level < 0 or self.optical_noise_ratio < 0:
            raise InvalidSpec("noise_level and optical_noise_ratio must be >= 0")
        if self.corrupt_factor is not None and self.corrupt_factor < 0:
            raise InvalidSpec("corrupt_factor must be >= 0")

    @property
    def optical_noise_level(self) -> float:
        return self.noise_level * self.optical_noise_ratio

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchmarkConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise InvalidSpec(f"unknown benchmark keys {sorted(unknown)}")
        return cls(**doc)

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


def random_spec(kind: ObjectType, rng: np.random.Generator, noise_level: float = BASELINE_NOISE,
                seed: int | None = None, optical_noise_level: float | None = None) -> SceneSpec:
    """Draw a plausible scene of the given object type.

    Pose and size vary only mildly around nominal values; most of the
    difficulty comes from the noise levels.
    """
    geom = SensorGeometry(
        altitude=float(rng.uniform(8.75, 9.25)),
        range_origin=float(rng.uniform(23.0, 25.0)),
        pixel_spacing=PIXEL_SPACING,
        look_direction=LookDirection.RIGHT,
    )
    jitter = rng.uniform(-1.0, 1.0, size=2)
    if kind is ObjectType.MANTA:
        size, height = rng.uniform(0.97, 1.03), rng.uniform(0.43, 0.47)
        orientation = rng.uniform(0.0, 180.0)
        centre = (22.0, 35.5)
    elif kind is ObjectType.CYLINDER:
        # lying roughly broadside
        size, height = rng.uniform(2.2, 2.4), rng.uniform(0.48, 0.52)
        orientation = 90.0 + rng.uniform(-3.0, 3.0)
        centre = (20.0, 35.5)
    else:
        size, height = rng.uniform(1.5, 1.7), rng.uniform(0.23, 0.27)
        orientation = rng.uniform(0.0, 180.0)
        centre = (22.0, 35.5)
    scene_seed = int(rng.integers(0, 2 ** 63)) if seed is None else seed
    return SceneSpec(
        object_type=kind,
        position=(centre[0] + jitter[0], centre[1] + jitter[1]),
        orientation_deg=float(orientation),
        size_m=float(size),
        height_m=float(height),
        noise_level=noise_level,
        sensor=geom,
        seed=scene_seed,
        optical_rotation_deg=float(rng.uniform(0.0, 180.0)),
        optical_noise_level=optical_noise_level,
    )


def make_benchmark(config: BenchmarkConfig = BenchmarkConfig()) -> list[ImagePair]:
    """Matched M/C/N pairs plus mismatched U pairs, in a deterministic order."""
    rng = np.random.default_rng(config.seed)
    kinds = list(ObjectType)
    scenes: dict[ObjectType, list[ImagePair]] = {k: [] for k in kinds}
    for kind in kinds:
        for i in range(config.n_per_class):
            spec = random_spec(kind, rng, config.noise_level, optical_noise_level=config.optical_noise_level)
            if config.corrupt_factor is not None:
                if rng.random() < 0.5:
                    spec = replace(spec, noise_level=spec.noise_level * config.corrupt_factor)
                else:
                    spec = replace(spec, optical_noise_level=spec.opt_noise * config.corrupt_factor)
            scenes[kind].append(generate_scene(spec, f"{kind.value}-{i:03d}"))

    n_mis = int(round(config.mismatch_fraction * config.n_per_class))
    pairs: list[ImagePair] = []
    for kind in kinds:
        pairs.extend(scenes[kind][: config.n_per_class - n_mis])
    # leftover scenes of each type are cross-paired with the other types in turn
    for j in range(n_mis):
        for k, kind in enumerate(kinds):
            shift = 1 + (j % 2)
            other = kinds[(k + shift) % len(kinds)]
            sas_src = scenes[kind][config.n_per_class - n_mis + j]
            opt_src = scenes[other][config.n_per_class - n_mis + j]
            pairs.append(mismatch_pair(sas_src, opt_src, f"mismatch-{kind.value}-{other.value}-{j:03d}"))
    return pairs
