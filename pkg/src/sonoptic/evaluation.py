"""Monte-Carlo evaluation: stratified splits, confusion matrices, ROC curves."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.metrics import auc, roc_curve

from .core import LABELS
from .errors import DegenerateSplit, InvalidValue, MissingClass
from .fusion import (
    DEFAULT_OPT_TRANSFER,
    DEFAULT_RIDGE,
    DEFAULT_SAS_TRANSFER,
    MODES,
    QdaModel,
    TransferFunction,
    class_log_densities,
    decide,
    fit,
    fusion_weights,
)
from .pipeline import FeatureTable

N_CLASSES = len(LABELS)


def one_vs_rest_average(per_class) -> float:
    """Unweighted mean of the four per-class results."""
    values = np.asarray(per_class, dtype=float)
    if values.shape != (N_CLASSES,):
        raise InvalidValue(f"expected {N_CLASSES} per-class values, got shape {values.shape}")
    return float(values.mean())


def stratified_split(y: np.ndarray, split: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle each class and put ``round(split * n_class)`` of it in the training fold.

    Per-class fold sizes are the same in every draw.
    """
    train, test = [], []
    for k in range(N_CLASSES):
        idx = np.nonzero(y == k)[0]
        n_train = int(round(split * idx.size))
        if n_train < 1 or n_train >= idx.size:
            raise DegenerateSplit(
                f"class {LABELS[k].value}: {idx.size} pairs cannot be split {split:g}/{1 - split:g} "
                "with both folds non-empty")
        idx = rng.permutation(idx)
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def _margins(logp: np.ndarray) -> np.ndarray:
    # per class: own log-density minus the best rival
    out = np.empty_like(logp)
    for k in range(logp.shape[1]):
        rivals = np.delete(logp, k, axis=1)
        out[:, k] = logp[:, k] - rivals.max(axis=1)
    return out


@dataclass(frozen=True)
class TrialResult:
    counts: np.ndarray       # 4x4 confusion counts
    truth: np.ndarray        # test label indices
    margins: np.ndarray      # (n_test, 4)


@dataclass(frozen=True)
class _PreparedTrial:
    model: QdaModel
    test: np.ndarray


@dataclass
class EvalReport:
    confusion: np.ndarray
    roc: dict
    mean_diag: float
    trials: int
    split: float
    mode: str
    seed: int
    config: dict = field(default_factory=dict)
    quality_sensitivity: dict | None = None
    cross_covariance: dict | None = None

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.confusion)

    def to_dict(self) -> dict:
        doc = {
            "confusion": self.confusion.tolist(),
            "labels": [lab.value for lab in LABELS],
            "roc": self.roc,
            "mean_diag": self.mean_diag,
            "trials": self.trials,
            "split": self.split,
            "mode": self.mode,
            "seed": self.seed,
            "config": self.config,
        }
        if self.quality_sensitivity is not None:
            doc["quality_sensitivity"] = self.quality_sensitivity
        if self.cross_covariance is not None:
            doc["cross_covariance"] = self.cross_covariance
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())


def _check_table(table: FeatureTable, split: float, mode: str) -> np.ndarray:
    if not 0.0 < split < 1.0:
        raise InvalidValue(f"split must lie in (0, 1), got {split}")
    if mode not in MODES:
        raise InvalidValue(f"unknown mode {mode!r}; expected one of {MODES}")
    y = table.label_indices()
    absent = [LABELS[k].value for k in range(N_CLASSES) if not np.any(y == k)]
    if absent:
        raise MissingClass(f"no pairs of class {absent}")
    return y


def _prepare(table: FeatureTable, y: np.ndarray, split: float, seed: int, ridge: float) -> _PreparedTrial:
    rng = np.random.default_rng(seed)
    train, test = stratified_split(y, split, rng)
    model = fit(table.t_sas[train], table.t_opt[train], [table.labels[i] for i in train], ridge=ridge)
    return _PreparedTrial(model, test)


def _run(prepared: _PreparedTrial, table: FeatureTable, y: np.ndarray, mode: str,
         transfer_sas: TransferFunction, transfer_opt: TransferFunction) -> TrialResult:
    model = prepared.model.with_transfers(transfer_sas, transfer_opt)
    test = prepared.test
    weights = np.array([fusion_weights(model, table.psi_sas[i], table.psi_opt[i], mode) for i in test])
    logp = class_log_densities(model, table.t_sas[test], table.t_opt[test], weights[:, 0], weights[:, 1])
    pred = decide(logp)
    counts = np.zeros((N_CLASSES, N_CLASSES))
    np.add.at(counts, (y[test], pred), 1)
    return TrialResult(counts, y[test], _margins(logp))


def run_trial(table: FeatureTable, seed: int, split: float = 0.7, mode: str = "fused",
              ridge: float = DEFAULT_RIDGE, transfer_sas: TransferFunction = DEFAULT_SAS_TRANSFER,
              transfer_opt: TransferFunction = DEFAULT_OPT_TRANSFER) -> TrialResult:
    """One stratified split, fit and test pass."""
    y = _check_table(table, split, mode)
    return _run(_prepare(table, y, split, seed, ridge), table, y, mode, transfer_sas, transfer_opt)


def confusion_from_counts(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)


def roc_curves(truth: np.ndarray, margins: np.ndarray) -> dict:
    """One-vs-rest ROC per class, thresholding the class's log-density margin."""
    out = {}
    for k, lab in enumerate(LABELS):
        positive = truth == k
        if positive.all() or not positive.any():
            fpr, tpr = np.array([0.0, 1.0]), np.array([0.0, 1.0])
        else:
            fpr, tpr, _ = roc_curve(positive, margins[:, k])
        out[lab.value] = {"fpr": fpr.tolist(), "tpr": tpr.tolist(), "auc": float(auc(fpr, tpr))}
    return out


def _aggregate(results: Sequence[TrialResult]) -> tuple[np.ndarray, dict, float]:
    # summing is order-independent up to float rounding of integer counts, i.e. exact
    counts = np.sum([r.counts for r in results], axis=0)
    confusion = confusion_from_counts(counts)
    roc = roc_curves(np.concatenate([r.truth for r in results]),
                     np.concatenate([r.margins for r in results]))
    return confusion, roc, one_vs_rest_average(np.diag(confusion))


def cross_covariance_report(table: FeatureTable) -> dict:
    """Per class: size of the SAS/optical cross-correlation block relative to the within-modality blocks.

    Features are standardised per class first; the ratio is
    ``||C_so||_F / sqrt(||C_ss||_F * ||C_oo||_F)``.
    """
    y = table.label_indices()
    out = {}
    for k, lab in enumerate(LABELS):
        sel = y == k
        if sel.sum() < 2:
            continue
        x = np.hstack([table.t_sas[sel], table.t_opt[sel]])
        sd = x.std(axis=0)
        z = (x - x.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
        c = z.T @ z / z.shape[0]
        dim = table.t_sas.shape[1]
        ss, oo, so = c[:dim, :dim], c[dim:, dim:], c[:dim, dim:]
        denom = np.sqrt(np.linalg.norm(ss) * np.linalg.norm(oo))
        out[lab.value] = float(np.linalg.norm(so) / denom) if denom > 0 else 0.0
    return out


def _perturbed(tf: TransferFunction, rng: np.random.Generator, rel_std: float) -> TransferFunction:
    w = np.array([tf.w_low, tf.w_mid, tf.w_high])
    w = np.sort(np.clip(w + rng.normal(0.0, rel_std, 3) * w, 0.0, 1.0))
    return replace(tf, w_low=float(w[0]), w_mid=float(w[1]), w_high=float(w[2]))


def quality_sensitivity(table: FeatureTable, prepared: Sequence[_PreparedTrial], y: np.ndarray,
                        baseline: float, transfer_sas: TransferFunction, transfer_opt: TransferFunction,
                        draws: int = 100, rel_std: float = 0.1, seed: int = 0) -> dict:
    """Spread of fused mean_diag when the transfer-function weights are jittered.

    Each draw adds Gaussian noise of ``rel_std`` times each weight (then clips
    to [0, 1] and re-sorts) and re-classifies every trial's test fold with the
    trial's already fitted model.
    """
    rng = np.random.default_rng(seed)
    changes = np.empty(draws)
    for d in range(draws):
        ts = _perturbed(transfer_sas, rng, rel_std)
        to = _perturbed(transfer_opt, rng, rel_std)
        counts = sum(_run(p, table, y, "fused", ts, to).counts for p in prepared)
        changes[d] = abs(one_vs_rest_average(np.diag(confusion_from_counts(counts))) - baseline)
    return {
        "draws": draws,
        "relative_std": rel_std,
        "abs_change_p90": float(np.percentile(changes, 90)),
        "abs_change_max": float(changes.max()) if draws else 0.0,
    }


def run_monte_carlo(table: FeatureTable, trials: int = 50, split: float = 0.7, mode: str = "fused",
                    seed: int = 0, ridge: float = DEFAULT_RIDGE,
                    transfer_sas: TransferFunction = DEFAULT_SAS_TRANSFER,
                    transfer_opt: TransferFunction = DEFAULT_OPT_TRANSFER,
                    sensitivity_draws: int = 0, config: dict | None = None) -> EvalReport:
    """Repeated stratified train/test evaluation.

    Trial ``i`` draws its split from ``seed + i``. The confusion matrix is the
    row-normalised sum of all trials' counts; because fold sizes per class
    are fixed, it also equals the mean of the per-trial matrices.
    """
    if trials < 1:
        raise InvalidValue("trials must be >= 1")
    y = _check_table(table, split, mode)
    prepared = [_prepare(table, y, split, seed + i, ridge) for i in range(trials)]
    results = [_run(p, table, y, mode, transfer_sas, transfer_opt) for p in prepared]
    confusion, roc, mean_diag = _aggregate(results)
    sens = None
    if sensitivity_draws and mode == "fused":
        sens = quality_sensitivity(table, prepared, y, mean_diag, transfer_sas, transfer_opt,
                                   draws=sensitivity_draws, seed=seed)
    echo = {"ridge": ridge, "transfer_sas": transfer_sas.as_dict(),
            "transfer_opt": transfer_opt.as_dict(), "n_pairs": len(table)}
    echo.update(config or {})
    return EvalReport(confusion, roc, mean_diag, trials, split, mode, seed, echo,
                      quality_sensitivity=sens, cross_covariance=cross_covariance_report(table))
