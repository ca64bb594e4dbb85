"""Domain types, graymap I/O and the JSON-lines dataset manifest."""
from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    DimensionMismatch,
    DimensionTooSmall,
    IllegalLabelValue,
    InconsistentDimensions,
    InvalidValue,
    MalformedFile,
    MissingFile,
    UnknownLabel,
)

MIN_SIDE = 8


class Modality(str, enum.Enum):
    OPTICAL = "optical"
    SAS = "sas"


class Region(enum.IntEnum):
    """Segmentation label; the value is the graymap code used on disk."""

    BACKGROUND = 0
    SHADOW = 128
    HIGHLIGHT = 255


class Label(str, enum.Enum):
    M = "M"
    C = "C"
    N = "N"
    U = "U"


#: Fixed class order; also the tie-break order of the classifier.
LABELS = (Label.M, Label.C, Label.N, Label.U)


class LookDirection(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"


def parse_label(value) -> Label:
    if isinstance(value, Label):
        return value
    try:
        return Label(str(value).strip().upper())
    except ValueError:
        raise UnknownLabel(f"unknown label {value!r}; expected one of M, C, N, U") from None


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RoiImage:
    """Single-channel intensity patch in [0, 1], indexed ``[row, col]``."""

    intensities: np.ndarray
    modality: Modality

    def __post_init__(self):
        a = np.asarray(self.intensities, dtype=float)
        if a.ndim != 2:
            raise InvalidValue(f"intensity grid must be 2-D, got shape {a.shape}")
        if a.shape[0] < MIN_SIDE or a.shape[1] < MIN_SIDE:
            raise DimensionTooSmall(f"ROI is {a.shape[1]}x{a.shape[0]}; both sides must be >= {MIN_SIDE}")
        if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
            raise InvalidValue("intensities must be finite and within [0, 1]")
        object.__setattr__(self, "intensities", _frozen(a))
        object.__setattr__(self, "modality", Modality(self.modality))

    @property
    def height(self) -> int:
        return self.intensities.shape[0]

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.intensities.shape


@dataclass(frozen=True)
class SegmentationMap:
    """Per-pixel background / highlight / shadow labels (``Region`` codes)."""

    labels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.labels)
        if a.ndim != 2:
            raise InvalidValue(f"label grid must be 2-D, got shape {a.shape}")
        bad = ~np.isin(a, [r.value for r in Region])
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise IllegalLabelValue(f"illegal label value {a[r, c]} at row {r}, col {c}")
        object.__setattr__(self, "labels", _frozen(a.astype(np.uint8)))

    @classmethod
    def from_masks(cls, highlight, shadow=None) -> "SegmentationMap":
        highlight = np.asarray(highlight, dtype=bool)
        labels = np.zeros(highlight.shape, dtype=np.uint8)
        if shadow is not None:
            labels[np.asarray(shadow, dtype=bool)] = Region.SHADOW
        labels[highlight] = Region.HIGHLIGHT
        return cls(labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def mask(self, region: Region) -> np.ndarray:
        return self.labels == Region(region).value

    @property
    def highlight(self) -> np.ndarray:
        return self.mask(Region.HIGHLIGHT)

    @property
    def shadow(self) -> np.ndarray:
        return self.mask(Region.SHADOW)

    @property
    def background(self) -> np.ndarray:
        return self.mask(Region.BACKGROUND)

    def counts(self) -> dict[Region, int]:
        return {r: int(np.count_nonzero(self.labels == r.value)) for r in Region}

    def check_matches(self, roi: RoiImage) -> None:
        if self.shape != roi.shape:
            raise DimensionMismatch(
                f"segmentation is {self.shape[1]}x{self.shape[0]} but ROI is {roi.width}x{roi.height}"
            )


@dataclass(frozen=True)
class PointCloud:
    """3-D points ``(x, y, z)``: x = column, y = row (pixels), z = height above seabed (m)."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", _frozen(p))

    def __len__(self):
        return self.points.shape[0]

    @property
    def x(self):
        return self.points[:, 0]

    @property
    def y(self):
        return self.points[:, 1]

    @property
    def z(self):
        return self.points[:, 2]


@dataclass(frozen=True)
class SensorGeometry:
    """Acquisition geometry of a SAS ROI.

    ``range_origin`` is the ground range (m) of the centre of the ROI column
    nearest to the sensor; range grows by ``pixel_spacing`` per column away
    from the sensor.
    """

    altitude: float
    range_origin: float
    pixel_spacing: float
    look_direction: LookDirection = LookDirection.RIGHT

    def __post_init__(self):
        if not self.altitude > 0:
            raise InvalidValue(f"altitude must be > 0, got {self.altitude}")
        if not self.pixel_spacing > 0:
            raise InvalidValue(f"pixel_spacing must be > 0, got {self.pixel_spacing}")
        if not self.range_origin >= 0:
            raise InvalidValue(f"range_origin must be >= 0, got {self.range_origin}")
        look = self.look_direction
        if not isinstance(look, LookDirection):
            try:
                look = LookDirection(str(look).lower())
            except ValueError:
                raise InvalidValue(f"look_direction must be 'left' or 'right', got {look!r}") from None
        object.__setattr__(self, "look_direction", look)

    def column_range(self, col, width: int):
        """Ground range in metres of (possibly fractional) column ``col``."""
        col = np.asarray(col, dtype=float)
        if self.look_direction is LookDirection.LEFT:
            col = (width - 1) - col
        return self.range_origin + col * self.pixel_spacing


@dataclass(frozen=True)
class ImagePair:
    sas: RoiImage
    sas_seg: SegmentationMap
    optical: RoiImage
    optical_seg: SegmentationMap
    geometry: SensorGeometry
    ground_truth: Label | None = None
    pair_id: str = ""

    def __post_init__(self):
        if self.sas.modality is not Modality.SAS:
            raise InvalidValue("sas slot holds a non-SAS ROI")
        if self.optical.modality is not Modality.OPTICAL:
            raise InvalidValue("optical slot holds a non-optical ROI")
        self.sas_seg.check_matches(self.sas)
        self.optical_seg.check_matches(self.optical)
        if self.ground_truth is not None:
            object.__setattr__(self, "ground_truth", parse_label(self.ground_truth))


# ---------------------------------------------------------------------------
# Binary portable graymap (P5)
# ---------------------------------------------------------------------------

def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a binary P5 graymap. Returns ``(pixels, maxval)``."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    data = path.read_bytes()
    if data[:2] != b"P5":
        raise MalformedFile(f"{path}: bad magic {data[:2]!r}, expected b'P5'")

    pos = 2
    tokens = []
    while len(tokens) < 3:
        if pos >= len(data):
            raise MalformedFile(f"{path}: truncated header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace() and data[end:end + 1] != b"#":
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise MalformedFile(f"{path}: missing whitespace after header")
    pos += 1

    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MalformedFile(f"{path}: non-numeric header field in {tokens!r}") from None
    if width <= 0 or height <= 0:
        raise MalformedFile(f"{path}: invalid dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise MalformedFile(f"{path}: maxval {maxval} outside 1..65535")

    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    nbytes = width * height * dtype.itemsize
    body = data[pos:pos + nbytes]
    if len(body) != nbytes:
        raise MalformedFile(f"{path}: expected {nbytes} pixel bytes, found {len(body)}")
    pixels = np.frombuffer(body, dtype=dtype).reshape(height, width).astype(np.int64)
    if pixels.max(initial=0) > maxval:
        raise MalformedFile(f"{path}: pixel value exceeds maxval {maxval}")
    return pixels, maxval


def write_pgm(path, pixels, maxval: int = 255) -> None:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise InvalidValue("graymap must be 2-D")
    if not 0 < maxval < 65536:
        raise InvalidValue(f"maxval {maxval} outside 1..65535")
    if pixels.min(initial=0) < 0 or pixels.max(initial=0) > maxval:
        raise InvalidValue("pixel values outside [0, maxval]")
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = pixels.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + pixels.astype(dtype).tobytes())


def load_roi(path, modality) -> RoiImage:
    pixels, maxval = read_pgm(path)
    if pixels.shape[0] < MIN_SIDE or pixels.shape[1] < MIN_SIDE:
        raise DimensionTooSmall(f"{path}: {pixels.shape[1]}x{pixels.shape[0]} is below {MIN_SIDE}x{MIN_SIDE}")
    return RoiImage(pixels / maxval, Modality(modality))


def save_roi(path, roi: RoiImage, maxval: int = 65535) -> None:
    write_pgm(path, np.rint(roi.intensities * maxval).astype(np.int64), maxval)


def load_segmentation(path, roi: RoiImage | None = None) -> SegmentationMap:
    """Load a ``{0, 128, 255}`` graymap (background / shadow / highlight)."""
    pixels, maxval = read_pgm(path)
    if maxval != 255:
        raise MalformedFile(f"{path}: segmentation must be an 8-bit graymap (maxval 255), got {maxval}")
    try:
        seg = SegmentationMap(pixels)
    except IllegalLabelValue as err:
        raise IllegalLabelValue(f"{path}: {err}") from None
    if roi is not None:
        seg.check_matches(roi)
    return seg


def save_segmentation(path, seg: SegmentationMap) -> None:
    write_pgm(path, seg.labels, 255)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

MANIFEST_KEYS = ("sas_image", "sas_seg", "opt_image", "opt_seg",
                 "altitude_m", "range_origin_m", "pixel_spacing_m", "look_direction")


def _resolve(base: Path, name: str) -> Path:
    p = Path(name)
    p = p if p.is_absolute() else base / p
    if not p.is_file():
        raise MissingFile(f"missing file: {p}")
    return p


def pair_from_record(record: dict, base_dir=".", default_id: str = "") -> ImagePair:
    """Build an :class:`ImagePair` from one manifest record (paths relative to ``base_dir``)."""
    missing = [k for k in MANIFEST_KEYS if k not in record]
    if missing:
        raise MalformedFile(f"manifest record lacks keys {missing}")
    base = Path(base_dir)
    label = record.get("label")
    ground_truth = None if label in (None, "") else parse_label(label)
    sas = load_roi(_resolve(base, record["sas_image"]), Modality.SAS)
    opt = load_roi(_resolve(base, record["opt_image"]), Modality.OPTICAL)
    sas_seg = load_segmentation(_resolve(base, record["sas_seg"]))
    opt_seg = load_segmentation(_resolve(base, record["opt_seg"]))
    for seg, roi, name in ((sas_seg, sas, "sas"), (opt_seg, opt, "optical")):
        if seg.shape != roi.shape:
            raise InconsistentDimensions(f"{name} segmentation {seg.shape} does not match image {roi.shape}")
    geom = SensorGeometry(
        altitude=float(record["altitude_m"]),
        range_origin=float(record["range_origin_m"]),
        pixel_spacing=float(record["pixel_spacing_m"]),
        look_direction=record["look_direction"],
    )
    return ImagePair(sas, sas_seg, opt, opt_seg, geom, ground_truth, str(record.get("id", default_id)))


def read_manifest_records(path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"missing file: {path}")
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as err:
            raise MalformedFile(f"{path}:{lineno}: {err.msg}") from None
        if not isinstance(rec, dict):
            raise MalformedFile(f"{path}:{lineno}: record is not a JSON object")
        records.append(rec)
    return records


def load_manifest(path) -> list[ImagePair]:
    """Load every pair listed in a JSON-lines manifest, in file order."""
    path = Path(path)
    base = path.parent
    return [pair_from_record(rec, base, default_id=str(i))
            for i, rec in enumerate(read_manifest_records(path))]


def write_manifest(path, records: Iterable[dict]) -> None:
    lines = [json.dumps(rec, sort_keys=True) for rec in records]
    Path(path).write_text("".join(line + "\n" for line in lines))


def save_pair(pair: ImagePair, directory, stem: str) -> dict:
    """Write the four graymaps of ``pair`` under ``directory`` and return its manifest record."""
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    names = {
        "sas_image": f"{stem}_sas.pgm",
        "sas_seg": f"{stem}_sas_seg.pgm",
        "opt_image": f"{stem}_opt.pgm",
        "opt_seg": f"{stem}_opt_seg.pgm",
    }
    save_roi(directory / names["sas_image"], pair.sas)
    save_segmentation(directory / names["sas_seg"], pair.sas_seg)
    save_roi(directory / names["opt_image"], pair.optical)
    save_segmentation(directory / names["opt_seg"], pair.optical_seg)
    g = pair.geometry
    record = dict(names)
    record.update(
        id=pair.pair_id or stem,
        altitude_m=g.altitude,
        range_origin_m=g.range_origin,
        pixel_spacing_m=g.pixel_spacing,
        look_direction=g.look_direction.value,
    )
    if pair.ground_truth is not None:
        record["label"] = pair.ground_truth.value
    return record
