"""Per-pair feature extraction: real SAS maps and transformed optical maps."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import LABELS, ImagePair, Label, LookDirection
from .errors import InvalidValue
from .descriptors import FeatureVector, MorletParams, extract_features
from .fusion import quality_index
from .optic2sas import DEFAULT_HEIGHT_SCALE, optic_to_sas


@dataclass(frozen=True)
class PairFeatures:
    pair_id: str
    sas: FeatureVector
    optical: FeatureVector
    psi_sas: float
    psi_opt: float
    label: Label | None


def _canonical(mask: np.ndarray, pair: ImagePair) -> np.ndarray:
    # descriptors assume the sensor on the left of the ROI
    return mask[:, ::-1] if pair.geometry.look_direction is LookDirection.LEFT else mask


def pair_features(pair: ImagePair, height_scale: float = DEFAULT_HEIGHT_SCALE,
                  params: MorletParams = MorletParams()) -> PairFeatures:
    synth = optic_to_sas(pair, height_scale)
    t_sas = extract_features(_canonical(pair.sas_seg.highlight, pair),
                             _canonical(pair.sas_seg.shadow, pair), params)
    t_opt = extract_features(_canonical(synth.highlight, pair), _canonical(synth.shadow, pair), params)
    return PairFeatures(
        pair_id=pair.pair_id,
        sas=t_sas,
        optical=t_opt,
        psi_sas=quality_index(pair.sas, pair.sas_seg),
        psi_opt=quality_index(pair.optical, pair.optical_seg),
        label=pair.ground_truth,
    )


@dataclass(frozen=True)
class FeatureTable:
    """Column-oriented features of many pairs, ready for fitting and evaluation."""

    ids: tuple[str, ...]
    t_sas: np.ndarray
    t_opt: np.ndarray
    psi_sas: np.ndarray
    psi_opt: np.ndarray
    labels: tuple[Label | None, ...]
    shadow_missing_sas: np.ndarray
    shadow_missing_opt: np.ndarray

    def __len__(self):
        return len(self.ids)

    @classmethod
    def from_pair_features(cls, rows: Sequence[PairFeatures]) -> "FeatureTable":
        dim = 9
        return cls(
            ids=tuple(r.pair_id for r in rows),
            t_sas=np.array([r.sas.as_array() for r in rows]).reshape(-1, dim),
            t_opt=np.array([r.optical.as_array() for r in rows]).reshape(-1, dim),
            psi_sas=np.array([r.psi_sas for r in rows], dtype=float),
            psi_opt=np.array([r.psi_opt for r in rows], dtype=float),
            labels=tuple(r.label for r in rows),
            shadow_missing_sas=np.array([r.sas.shadow_missing for r in rows], dtype=bool),
            shadow_missing_opt=np.array([r.optical.shadow_missing for r in rows], dtype=bool),
        )

    def label_indices(self) -> np.ndarray:
        if any(lab is None for lab in self.labels):
            raise InvalidValue("every pair needs a ground-truth label")
        return np.array([LABELS.index(lab) for lab in self.labels])

    def subset(self, idx) -> "FeatureTable":
        idx = np.asarray(idx)
        return FeatureTable(
            ids=tuple(self.ids[i] for i in idx),
            t_sas=self.t_sas[idx],
            t_opt=self.t_opt[idx],
            psi_sas=self.psi_sas[idx],
            psi_opt=self.psi_opt[idx],
            labels=tuple(self.labels[i] for i in idx),
            shadow_missing_sas=self.shadow_missing_sas[idx],
            shadow_missing_opt=self.shadow_missing_opt[idx],
        )

    def with_labels(self, labels) -> "FeatureTable":
        return FeatureTable(self.ids, self.t_sas, self.t_opt, self.psi_sas, self.psi_opt,
                            tuple(labels), self.shadow_missing_sas, self.shadow_missing_opt)


def feature_table(pairs: Sequence[ImagePair], height_scale: float = DEFAULT_HEIGHT_SCALE,
                  params: MorletParams = MorletParams()) -> FeatureTable:
    return FeatureTable.from_pair_features([pair_features(p, height_scale, params) for p in pairs])
