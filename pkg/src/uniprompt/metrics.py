"""Evaluation protocol: accuracy decomposition, H-score, ranking AUC,
and score-distribution summaries.

Known-class accuracy is the per-class mean (robust to class imbalance);
the pooled instance accuracy is reported alongside it. AUC treats known
samples as the positive class and is the exact Mann-Whitney statistic
(ties count one half), so it is invariant under strictly monotone score
transforms.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

UNKNOWN = "UNKNOWN"


@dataclass
class AccuracyBreakdown:
    acc_known: float
    acc_unknown: float
    per_class: dict[int, float]
    acc_known_pooled: float


def accuracy_decomposition(
    predictions: Mapping[str, int | str],
    ground_truth: Mapping[str, int | str],
) -> AccuracyBreakdown:
    """Known-class (per-class mean) and unknown-class accuracies.

    A known sample counts as correct only when predicted exactly its
    class; an unknown sample only when predicted UNKNOWN.
    """
    if set(predictions) != set(ground_truth):
        raise ValueError("prediction and ground-truth id sets differ")
    known_total: dict[int, int] = {}
    known_correct: dict[int, int] = {}
    unknown_total = 0
    unknown_correct = 0
    for sample_id, truth in ground_truth.items():
        pred = predictions[sample_id]
        if truth == UNKNOWN:
            unknown_total += 1
            unknown_correct += pred == UNKNOWN
        else:
            cls = int(truth)
            known_total[cls] = known_total.get(cls, 0) + 1
            known_correct[cls] = known_correct.get(cls, 0) + (pred == truth)
    if not known_total or not unknown_total:
        raise ValueError(
            "ground truth must contain at least one known and one unknown sample"
        )
    per_class = {c: known_correct[c] / known_total[c] for c in sorted(known_total)}
    acc_known = float(np.mean(list(per_class.values())))
    acc_unknown = unknown_correct / unknown_total
    pooled = sum(known_correct.values()) / sum(known_total.values())
    return AccuracyBreakdown(acc_known, acc_unknown, per_class, pooled)


def h_score(acc_known: float, acc_unknown: float) -> float:
    """Harmonic mean of the two accuracies; 0 when either is 0."""
    if not 0.0 <= acc_known <= 1.0 or not 0.0 <= acc_unknown <= 1.0:
        raise ValueError("accuracies must lie in [0, 1]")
    denominator = acc_known + acc_unknown
    if denominator == 0.0:
        return 0.0
    return 2.0 * acc_known * acc_unknown / denominator


def roc_auc(scores: Mapping[str, float], is_unknown: Mapping[str, bool]) -> float:
    """Probability a known sample outranks an unknown one (ties half).

    Known samples are the positive class and higher scores rank as more
    known; callers feeding energy scores flip the sign as their sign
    convention requires.
    """
    if set(scores) != set(is_unknown):
        raise ValueError("score and label id sets differ")
    ids = sorted(scores)
    y = np.array([not is_unknown[i] for i in ids], dtype=bool)
    s = np.array([scores[i] for i in ids], dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = int(len(y) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one known and one unknown sample")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s), dtype=np.float64)
    ranks[order] = np.arange(1, len(s) + 1)
    # average ranks over tied scores
    sorted_scores = s[order]
    i = 0
    while i < len(sorted_scores):
        j = i
        while j + 1 < len(sorted_scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def score_histogram(scores: Sequence[float], bins: int) -> list[tuple[float, float, int]]:
    """Equal-width bins spanning [min, max]; counts partition the input."""
    values = np.asarray(list(scores), dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot histogram an empty score list")
    if bins < 2:
        raise ValueError("need at least 2 bins")
    counts, edges = np.histogram(values, bins=bins)
    return [
        (float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)
    ]


def histogram_to_csv(table: list[tuple[float, float, int]], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_start", "bin_end", "count"])
        for lo, hi, count in table:
            writer.writerow([repr(lo), repr(hi), count])


def config_fingerprint(config_dict: dict) -> str:
    """Stable hash of a JSON-serializable experiment configuration."""
    canonical = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class MetricsReport:
    acc_known: float
    acc_unknown: float
    acc_known_pooled: float
    h_score: float
    auc: float
    auc_orientation: str  # "raw" or "negated" energy ranking
    per_class_accuracy: dict[int, float]
    energy_summary: dict[str, float | dict[str, float]]
    config_fingerprint: str

    def __post_init__(self):
        denominator = self.acc_known + self.acc_unknown
        expected = 0.0 if denominator == 0.0 else (
            2.0 * self.acc_known * self.acc_unknown / denominator
        )
        if abs(self.h_score - expected) > 1e-12:
            raise ValueError("h_score inconsistent with its accuracies")

    def to_dict(self) -> dict:
        return {
            "acc_known": self.acc_known,
            "acc_unknown": self.acc_unknown,
            "acc_known_pooled": self.acc_known_pooled,
            "h_score": self.h_score,
            "auc": self.auc,
            "auc_orientation": self.auc_orientation,
            "per_class_accuracy": {str(k): v for k, v in self.per_class_accuracy.items()},
            "energy_summary": self.energy_summary,
            "config_fingerprint": self.config_fingerprint,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            acc_known=d["acc_known"],
            acc_unknown=d["acc_unknown"],
            acc_known_pooled=d["acc_known_pooled"],
            h_score=d["h_score"],
            auc=d["auc"],
            auc_orientation=d["auc_orientation"],
            per_class_accuracy={int(k): v for k, v in d["per_class_accuracy"].items()},
            energy_summary=d["energy_summary"],
            config_fingerprint=d["config_fingerprint"],
        )
