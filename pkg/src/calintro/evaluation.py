"""Reliability plots and conventional metrics for comparing predictors.

The reliability curve measures combined model+expert accuracy while the
ceil(p * N) least-confident samples (highest softmax entropy) are deferred
to an oracle expert that answers with the true label. Accuracy at fraction p
is micro-averaged: (correct among retained + number deferred) / N.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import predictor as pr
from .errors import ConfigError, ShapeError

DEFAULT_FRACTIONS = tuple(np.round(np.linspace(0.0, 1.0, 21), 2).tolist())


@dataclass
class ReliabilityCurve:
    fractions: list[float]
    accuracies: list[float]
    predictor_id: str = ""


@dataclass
class EvalConfig:
    alpha: float = 0.7
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    predictor_id: str = "model"


@dataclass
class EvalReport:
    predictor_id: str
    plain_accuracy: float
    macro_accuracy: float
    weighted_auc: float
    curve: ReliabilityCurve
    per_class_coverage: list[float] | None = None  # interval predictors only
    skipped_classes: list[int] = field(default_factory=list)
    deferral_averaging: str = "micro"

    def to_dict(self) -> dict:
        return {
            "predictor_id": self.predictor_id,
            "plain_accuracy": self.plain_accuracy,
            "macro_accuracy": self.macro_accuracy,
            "weighted_auc": self.weighted_auc,
            "per_class_coverage": self.per_class_coverage,
            "skipped_classes": self.skipped_classes,
            "deferral_averaging": self.deferral_averaging,
            "curve": {
                "fractions": list(self.curve.fractions),
                "accuracies": list(self.curve.accuracies),
                "predictor_id": self.curve.predictor_id,
            },
        }

    @staticmethod
    def from_dict(d: dict) -> "EvalReport":
        return EvalReport(
            predictor_id=d["predictor_id"],
            plain_accuracy=d["plain_accuracy"],
            macro_accuracy=d["macro_accuracy"],
            weighted_auc=d["weighted_auc"],
            per_class_coverage=d.get("per_class_coverage"),
            skipped_classes=list(d.get("skipped_classes", [])),
            deferral_averaging=d.get("deferral_averaging", "micro"),
            curve=ReliabilityCurve(
                fractions=list(d["curve"]["fractions"]),
                accuracies=list(d["curve"]["accuracies"]),
                predictor_id=d["curve"]["predictor_id"],
            ),
        )


def deferral_order(entropies: np.ndarray) -> np.ndarray:
    """Sample indices in deferral priority: entropy descending, ties by index."""
    entropies = np.asarray(entropies, dtype=np.float64)
    return np.argsort(-entropies, kind="stable")


def reliability_curve(entropies, predicted, truth, fractions=DEFAULT_FRACTIONS,
                      predictor_id: str = "") -> ReliabilityCurve:
    entropies = np.asarray(entropies, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if not (len(entropies) == len(predicted) == len(truth)):
        raise ShapeError(f"misaligned arrays: {len(entropies)}, {len(predicted)}, {len(truth)}")
    n = len(entropies)
    if n == 0:
        raise ConfigError("empty input")
    fractions = [float(p) for p in fractions]
    if any(p < 0.0 or p > 1.0 for p in fractions):
        raise ConfigError("fractions must lie in [0, 1]")

    order = deferral_order(entropies)
    correct = (predicted == truth).astype(np.float64)
    correct_in_order = correct[order]
    accs = []
    for p in fractions:
        k = int(np.ceil(p * n))
        retained_correct = correct_in_order[k:].sum()
        accs.append(float((retained_correct + k) / n))
    return ReliabilityCurve(fractions=fractions, accuracies=accs, predictor_id=predictor_id)


def per_class_recall(predicted, truth, num_classes: int):
    predicted = np.asarray(predicted, dtype=int)
    truth = np.asarray(truth, dtype=int)
    recalls = np.zeros(num_classes)
    present = np.zeros(num_classes, dtype=bool)
    for c in range(num_classes):
        mask = truth == c
        if mask.any():
            present[c] = True
            recalls[c] = float((predicted[mask] == c).mean())
    return recalls, present


def macro_accuracy(predicted, truth, num_classes: int) -> float:
    """Unweighted mean per-class recall; classes absent from truth are skipped."""
    if len(np.asarray(truth)) == 0:
        raise ConfigError("empty input")
    recalls, present = per_class_recall(predicted, truth, num_classes)
    return float(recalls[present].mean())


def binary_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Rank-sum (Mann-Whitney) ROC AUC; ties contribute one half."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = len(scores) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("binary AUC needs at least one positive and one negative")
    ranks = rankdata(scores, method="average")
    r_pos = float(ranks[positives].sum())
    return (r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def weighted_auc(scores: np.ndarray, truth, num_classes: int) -> float:
    """Support-weighted one-vs-rest AUC over the softmax score matrix."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=int)
    if scores.ndim != 2 or scores.shape[0] != len(truth):
        raise ShapeError(f"scores {scores.shape} misaligned with truth {truth.shape}")
    aucs, weights = [], []
    for c in range(num_classes):
        pos = truth == c
        support = int(pos.sum())
        if support == 0 or support == len(truth):
            warnings.warn(f"class {c} lacks positives or negatives; excluded from weighted AUC")
            continue
        aucs.append(binary_auc(scores[:, c], pos))
        weights.append(support)
    if not aucs:
        raise ConfigError("no class had both positives and negatives")
    weights_arr = np.asarray(weights, dtype=np.float64)
    return float(np.dot(aucs, weights_arr / weights_arr.sum()))


def evaluate(model, latents: np.ndarray, truth, config: EvalConfig) -> EvalReport:
    """Assemble all metrics for one predictor on one split.

    `model` needs a `logits(latents)` method; if it also exposes
    `intervals(latents)` the per-class coverage of the smoothed logit targets
    is reported too.
    """
    z = np.asarray(latents, dtype=np.float64)
    truth = np.asarray(truth, dtype=int)
    logits = model.logits(z)
    k = logits.shape[1]
    rho = pr.softmax_batch(logits)
    entropies = pr.entropy_of(rho)
    predicted = logits.argmax(axis=1)

    curve = reliability_curve(entropies, predicted, truth, config.fractions,
                              predictor_id=config.predictor_id)
    recalls, present = per_class_recall(predicted, truth, k)
    skipped = [int(c) for c in range(k) if not present[c]]

    coverage = None
    if hasattr(model, "intervals"):
        y_hat, delta = model.intervals(z)
        targets = np.stack([np.full(k, -2.0) for _ in truth])
        targets[np.arange(len(truth)), truth] = 1.0
        err = pr.hard_calibration_error_arrays(y_hat, delta, targets, config.alpha)
        coverage = err.coverage.tolist()

    return EvalReport(
        predictor_id=config.predictor_id,
        plain_accuracy=float((predicted == truth).mean()),
        macro_accuracy=float(recalls[present].mean()),
        weighted_auc=weighted_auc(rho, truth, k),
        curve=curve,
        per_class_coverage=coverage,
        skipped_classes=skipped,
    )


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True)


def report_from_json(text: str) -> EvalReport:
    return EvalReport.from_dict(json.loads(text))


def curve_to_csv(curve: ReliabilityCurve) -> str:
    lines = ["fraction,accuracy"]
    for p, a in zip(curve.fractions, curve.accuracies):
        lines.append(f"{format(float(p), '.17g')},{format(float(a), '.17g')}")
    return "\n".join(lines) + "\n"


def curve_from_csv(text: str, predictor_id: str = "") -> ReliabilityCurve:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != "fraction,accuracy":
        raise ConfigError("curve CSV must start with 'fraction,accuracy'")
    fr, ac = [], []
    for ln in lines[1:]:
        a, b = ln.split(",")
        fr.append(float(a))
        ac.append(float(b))
    return ReliabilityCurve(fractions=fr, accuracies=ac, predictor_id=predictor_id)
