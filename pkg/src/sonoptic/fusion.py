"""Image-quality weighting and the quadratic discriminant classifier.

Each class keeps separate SAS and optical-to-SAS statistics. At decision
time the two modalities are merged with the pair's normalised quality
weights ``(a, b)``: features ``a*t_sas + b*t_opt`` (axial angles averaged on
the doubled-angle circle), class means ``a*m_sas + b*m_opt`` and class
covariances ``a**2*S_sas + b**2*S_opt``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .core import LABELS, Label, Region, RoiImage, SegmentationMap, parse_label
from .descriptors import AXIAL_FEATURES, N_FEATURES, FeatureVector
from .errors import (
    InvalidValue,
    MalformedFile,
    MissingClass,
    RegionTooSmall,
    SingularCovariance,
    ZeroWeights,
)

PSI_CAP = 1e6
DEFAULT_RIDGE = 1e-3
FORMAT_VERSION = 1
MODES = ("fused", "sas-only", "optic-only", "average-merge")
_HSO_INDEX = 4


# ---------------------------------------------------------------------------
# Quality
# ---------------------------------------------------------------------------

def quality_index(roi: RoiImage, seg: SegmentationMap) -> float:
    """Separation of background and echo (highlight) intensities.

    ``(mean_bg - mean_echo)**2 / (var_bg + var_echo)`` with population
    variances; a (numerically) zero denominator gives ``PSI_CAP`` (means differ) or 0.
    """
    seg.check_matches(roi)
    bg = roi.intensities[seg.mask(Region.BACKGROUND)]
    echo = roi.intensities[seg.mask(Region.HIGHLIGHT)]
    if bg.size < 2 or echo.size < 2:
        raise RegionTooSmall(f"need >= 2 background and highlight pixels, got {bg.size} and {echo.size}")
    gap = (bg.mean() - echo.mean()) ** 2
    spread = bg.var() + echo.var()
    # constant regions leave rounding-level variances behind
    scale = max(float(np.mean(bg * bg)), float(np.mean(echo * echo)), 1e-300)
    if spread <= 1e-24 * scale:
        return PSI_CAP if gap > 0.0 else 0.0
    return float(gap / spread)


@dataclass(frozen=True)
class TransferFunction:
    """Three-level step map from a quality index to a fusion weight."""

    t_low: float
    t_high: float
    w_low: float
    w_mid: float
    w_high: float

    def __post_init__(self):
        if not self.t_low < self.t_high:
            raise InvalidValue(f"thresholds must satisfy t_low < t_high, got {self.t_low}, {self.t_high}")
        if not 0.0 <= self.w_low <= self.w_mid <= self.w_high <= 1.0:
            raise InvalidValue("weights must satisfy 0 <= w_low <= w_mid <= w_high <= 1")

    def __call__(self, psi: float) -> float:
        return apply_transfer(psi, self)

    def as_dict(self) -> dict:
        return dict(t_low=self.t_low, t_high=self.t_high,
                    w_low=self.w_low, w_mid=self.w_mid, w_high=self.w_high)


def apply_transfer(psi: float, tf: TransferFunction) -> float:
    if psi < tf.t_low:
        return tf.w_low
    if psi < tf.t_high:
        return tf.w_mid
    return tf.w_high


DEFAULT_SAS_TRANSFER = TransferFunction(0.3, 3.0, 0.4, 0.6, 0.65)
DEFAULT_OPT_TRANSFER = TransferFunction(0.3, 3.0, 0.1, 0.25, 0.3)


# ---------------------------------------------------------------------------
# Feature merging
# ---------------------------------------------------------------------------

def normalise_weights(w_sas, w_opt):
    w_sas = np.asarray(w_sas, dtype=float)
    w_opt = np.asarray(w_opt, dtype=float)
    total = w_sas + w_opt
    if np.any(total <= 0) or np.any(w_sas < 0) or np.any(w_opt < 0):
        raise ZeroWeights("fusion weights must be non-negative with a positive sum")
    return w_sas / total, w_opt / total


def _as_values(t) -> np.ndarray:
    return t.as_array() if isinstance(t, FeatureVector) else np.asarray(t, dtype=float)


def merge_features(t_sas, t_opt, w_sas, w_opt) -> np.ndarray:
    """Quality-weighted convex combination of two feature vectors.

    Works on single vectors or row-stacked batches (with per-row weights).
    Axial components use the weighted circular mean of doubled angles; they
    are only recognised on full-length feature vectors.
    """
    ts, to = _as_values(t_sas), _as_values(t_opt)
    a, b = normalise_weights(w_sas, w_opt)
    batch = ts.ndim == 2
    a_col = a[:, None] if batch and a.ndim == 1 else a
    b_col = b[:, None] if batch and b.ndim == 1 else b
    out = a_col * ts + b_col * to

    if ts.shape[-1] == N_FEATURES:
        ax = list(AXIAL_FEATURES)
        phi_s = np.radians(2.0 * ts[..., ax])
        phi_o = np.radians(2.0 * to[..., ax])
        s = a_col * np.sin(phi_s) + b_col * np.sin(phi_o)
        c = a_col * np.cos(phi_s) + b_col * np.cos(phi_o)
        out[..., ax] = np.degrees(np.arctan2(s, c)) / 2.0 % 180.0
        h = out[..., _HSO_INDEX]
        out[..., _HSO_INDEX] = np.where(h > 90.0, 180.0 - h, h)

    # single-modality weights reproduce the input bit for bit
    only_s = np.broadcast_to(b == 0, out.shape[:-1])
    only_o = np.broadcast_to(a == 0, out.shape[:-1])
    out[only_s] = np.broadcast_to(ts, out.shape)[only_s]
    out[only_o] = np.broadcast_to(to, out.shape)[only_o]
    return out


# ---------------------------------------------------------------------------
# QDA model
# ---------------------------------------------------------------------------

def population_stats(x) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population covariance (divide by n) of the rows of ``x``."""
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=0)
    d = x - mean
    return mean, d.T @ d / x.shape[0]


def regularise(cov, ridge: float) -> np.ndarray:
    """``cov + ridge * diag(cov)``: each variance inflated by the factor ``1 + ridge``.

    Scaling by each feature's own variance keeps the ridge independent of
    feature units (degrees next to unit-norm coefficients). Zero variances
    are floored at a tiny fraction of the mean variance.
    """
    cov = np.asarray(cov, dtype=float)
    var = np.diag(cov)
    floor = 1e-12 * max(float(var.mean()), np.finfo(float).tiny) if var.size else 0.0
    return cov + ridge * np.diag(np.maximum(var, floor))


@dataclass(frozen=True)
class ClassStats:
    label: Label
    mean_sas: np.ndarray
    mean_opt: np.ndarray
    cov_sas: np.ndarray
    cov_opt: np.ndarray
    n_sas: int
    n_opt: int

    def merged(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        return a * self.mean_sas + b * self.mean_opt, a * a * self.cov_sas + b * b * self.cov_opt


@dataclass(frozen=True)
class QdaModel:
    classes: tuple[ClassStats, ...]
    ridge: float = DEFAULT_RIDGE
    transfer_sas: TransferFunction = DEFAULT_SAS_TRANSFER
    transfer_opt: TransferFunction = DEFAULT_OPT_TRANSFER

    def __post_init__(self):
        present = {c.label for c in self.classes}
        absent = [lab.value for lab in LABELS if lab not in present]
        if absent:
            raise MissingClass(f"model lacks classes {absent}")
        order = {lab: i for i, lab in enumerate(LABELS)}
        object.__setattr__(self, "classes", tuple(sorted(self.classes, key=lambda c: order[c.label])))

    @property
    def dim(self) -> int:
        return int(self.classes[0].mean_sas.shape[0])

    def stats(self, label) -> ClassStats:
        return self.classes[LABELS.index(parse_label(label))]

    def with_transfers(self, transfer_sas=None, transfer_opt=None) -> "QdaModel":
        return replace(self, transfer_sas=transfer_sas or self.transfer_sas,
                       transfer_opt=transfer_opt or self.transfer_opt)

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "ridge": self.ridge,
            "transfer_sas": self.transfer_sas.as_dict(),
            "transfer_opt": self.transfer_opt.as_dict(),
            "classes": [
                {
                    "label": c.label.value,
                    "n_sas": c.n_sas,
                    "n_opt": c.n_opt,
                    "mean_sas": c.mean_sas.tolist(),
                    "mean_opt": c.mean_opt.tolist(),
                    "cov_sas": c.cov_sas.ravel().tolist(),
                    "cov_opt": c.cov_opt.ravel().tolist(),
                }
                for c in self.classes
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "QdaModel":
        if doc.get("format_version") != FORMAT_VERSION:
            raise MalformedFile(f"unsupported model format_version {doc.get('format_version')!r}")
        classes = []
        for c in doc["classes"]:
            dim = len(c["mean_sas"])
            classes.append(ClassStats(
                label=parse_label(c["label"]),
                mean_sas=np.array(c["mean_sas"], dtype=float),
                mean_opt=np.array(c["mean_opt"], dtype=float),
                cov_sas=np.array(c["cov_sas"], dtype=float).reshape(dim, dim),
                cov_opt=np.array(c["cov_opt"], dtype=float).reshape(dim, dim),
                n_sas=int(c["n_sas"]),
                n_opt=int(c["n_opt"]),
            ))
        return cls(tuple(classes), float(doc["ridge"]),
                   TransferFunction(**doc["transfer_sas"]), TransferFunction(**doc["transfer_opt"]))


def save_model(model: QdaModel, path) -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n")


def load_model(path) -> QdaModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise MalformedFile(f"{path}: {err.msg}") from None
    return QdaModel.from_dict(doc)


def fit(t_sas, t_opt, labels: Sequence, ridge: float = DEFAULT_RIDGE,
        transfer_sas: TransferFunction = DEFAULT_SAS_TRANSFER,
        transfer_opt: TransferFunction = DEFAULT_OPT_TRANSFER) -> QdaModel:
    """Per-class, per-modality means and ridge-regularised population covariances.

    ``t_sas`` and ``t_opt`` are ``(n, L)`` arrays whose row ``i`` holds the
    SAS and optical-to-SAS features of training pair ``i``.
    """
    ts = np.asarray(t_sas, dtype=float)
    to = np.asarray(t_opt, dtype=float)
    labels = [parse_label(v) for v in labels]
    if ts.shape != to.shape or ts.ndim != 2 or ts.shape[0] != len(labels):
        raise InvalidValue("t_sas, t_opt and labels must describe the same n pairs")
    absent = [lab.value for lab in LABELS if lab not in labels]
    if absent:
        raise MissingClass(f"training data has no samples of class {absent}")
    lab_arr = np.array([lab.value for lab in labels])
    classes = []
    for lab in LABELS:
        sel = lab_arr == lab.value
        ms, cs = population_stats(ts[sel])
        mo, co = population_stats(to[sel])
        n = int(sel.sum())
        classes.append(ClassStats(lab, ms, mo, regularise(cs, ridge), regularise(co, ridge), n, n))
    return QdaModel(tuple(classes), ridge, transfer_sas, transfer_opt)


def gaussian_log_density(t, mean, cov) -> np.ndarray:
    """Log of the multivariate normal density via a Cholesky factor.

    ``t`` may be a single vector or a row stack.
    """
    cov = np.asarray(cov, dtype=float)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularCovariance("merged class covariance is not positive definite") from None
    diag = np.diag(chol)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise SingularCovariance("merged class covariance is not positive definite")
    t = np.asarray(t, dtype=float)
    d = np.atleast_2d(t) - mean
    z = solve_triangular(chol, d.T, lower=True)
    dim = cov.shape[0]
    logdet = 2.0 * np.sum(np.log(diag))
    out = -0.5 * (dim * math.log(2.0 * math.pi) + logdet + np.sum(z * z, axis=0))
    return out if t.ndim == 2 else float(out[0])


def log_density(model: QdaModel, label, t, w_sas: float, w_opt: float) -> float:
    a, b = normalise_weights(w_sas, w_opt)
    mean, cov = model.stats(label).merged(float(a), float(b))
    return gaussian_log_density(_as_values(t), mean, cov)


def fusion_weights(model: QdaModel, psi_sas, psi_opt, mode: str = "fused"):
    """Unnormalised (w_sas, w_opt) for a pair under the given merging mode."""
    if mode == "fused":
        return apply_transfer(psi_sas, model.transfer_sas), apply_transfer(psi_opt, model.transfer_opt)
    if mode == "sas-only":
        return 1.0, 0.0
    if mode == "optic-only":
        return 0.0, 1.0
    if mode == "average-merge":
        return 0.5, 0.5
    raise InvalidValue(f"unknown mode {mode!r}; expected one of {MODES}")


def class_log_densities(model: QdaModel, t_sas, t_opt, w_sas, w_opt) -> np.ndarray:
    """``(n, 4)`` log-densities of merged pairs, columns in M, C, N, U order."""
    ts = np.atleast_2d(_as_values(t_sas))
    to = np.atleast_2d(_as_values(t_opt))
    n = ts.shape[0]
    a, b = normalise_weights(np.broadcast_to(w_sas, (n,)), np.broadcast_to(w_opt, (n,)))
    merged = merge_features(ts, to, a, b)
    out = np.empty((n, len(LABELS)))
    keys = np.column_stack([a, b])
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    for k, (ak, bk) in enumerate(uniq):
        rows = inverse == k
        for j, stats in enumerate(model.classes):
            mean, cov = stats.merged(float(ak), float(bk))
            out[rows, j] = gaussian_log_density(merged[rows], mean, cov)
    return out


def decide(log_densities) -> np.ndarray:
    """Index of the winning class per row; ties go to the earliest of M, C, N, U."""
    return np.argmax(np.atleast_2d(log_densities), axis=1)


@dataclass(frozen=True)
class Decision:
    label: Label
    log_densities: np.ndarray
    w_sas: float
    w_opt: float


def classify(model: QdaModel, t_sas, t_opt, psi_sas: float, psi_opt: float,
             mode: str = "fused", w_sas: float | None = None, w_opt: float | None = None) -> Decision:
    """Label one pair. Explicit ``w_sas``/``w_opt`` override the mode's weights."""
    ws, wo = fusion_weights(model, psi_sas, psi_opt, mode)
    ws = ws if w_sas is None else w_sas
    wo = wo if w_opt is None else w_opt
    logp = class_log_densities(model, t_sas, t_opt, ws, wo)[0]
    return Decision(LABELS[int(decide(logp)[0])], logp, float(ws), float(wo))
