"""Quantitative evaluation: top-m emphasis agreement (Match/F1), mean
absolute error on acoustic features, Fleiss kappa for annotator agreement,
and a rank-based ROC-AUC used by the smoke-training checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class MetricsError(ValueError):
    """Invalid metric input."""


@dataclass(frozen=True)
class EmphasisTestInstance:
    """Ground-truth intensities and predicted scores for one utterance."""

    ground_truth: tuple[float, ...]
    predicted: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.ground_truth) != len(self.predicted):
            raise MetricsError(
                f"{len(self.ground_truth)} ground-truth values vs "
                f"{len(self.predicted)} predictions"
            )
        if len(self.ground_truth) == 0:
            raise MetricsError("instance must have at least one word")


def tie_break_topm(values: Sequence[float], m: int) -> set[int]:
    """Indices of the top min(m, len) values; ties go to the lower index."""
    if m < 1:
        raise MetricsError(f"m must be >= 1, got {m}")
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    return set(order[: min(m, len(values))])


def match_m(instances: Sequence[EmphasisTestInstance], m: int) -> float:
    """Mean over instances of |top-m(gt) ∩ top-m(pred)| / min(m, words)."""
    if not instances:
        raise MetricsError("empty test set")
    total = 0.0
    for inst in instances:
        gt = tie_break_topm(inst.ground_truth, m)
        pred = tie_break_topm(inst.predicted, m)
        total += len(gt & pred) / min(m, len(inst.ground_truth))
    return total / len(instances)


def f1_m(instances: Sequence[EmphasisTestInstance], m: int) -> float:
    """Macro-averaged F1 between the top-m sets of truth and prediction."""
    if not instances:
        raise MetricsError("empty test set")
    total = 0.0
    for inst in instances:
        gt = tie_break_topm(inst.ground_truth, m)
        pred = tie_break_topm(inst.predicted, m)
        overlap = len(gt & pred)
        if overlap == 0:
            continue
        precision = overlap / len(pred)
        recall = overlap / len(gt)
        total += 2 * precision * recall / (precision + recall)
    return total / len(instances)


def mae(predicted: Sequence[float] | np.ndarray, true: Sequence[float] | np.ndarray) -> float:
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(true, dtype=np.float64)
    if p.shape != t.shape:
        raise MetricsError(f"shape mismatch {p.shape} vs {t.shape}")
    if p.size == 0:
        raise MetricsError("empty series")
    return float(np.mean(np.abs(p - t)))


def normalize_durations(durations: Sequence[float] | np.ndarray) -> np.ndarray:
    """Durations relative to the utterance's mean phoneme duration, making
    the duration error scale-free across utterance lengths."""
    d = np.asarray(durations, dtype=np.float64)
    if d.size == 0:
        raise MetricsError("empty duration vector")
    return d / d.mean()


def fleiss_kappa(item_counts: Sequence[Sequence[int]]) -> float | None:
    """Fleiss kappa over items x categories vote counts.

    Every item must have the same number of raters (>= 2). Returns None for
    the degenerate case where every rating lands in one category (chance
    agreement is 1 and kappa is undefined).
    """
    table = np.asarray(item_counts, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < 1 or table.shape[1] < 2:
        raise MetricsError("need a 2-D items x categories count table")
    raters = table.sum(axis=1)
    n = raters[0]
    if n < 2:
        raise MetricsError("each item needs at least 2 raters")
    if not np.all(raters == n):
        raise MetricsError(f"unequal rater counts per item: {sorted(set(raters.tolist()))}")
    n_items = table.shape[0]
    p_i = (np.sum(table**2, axis=1) - n) / (n * (n - 1))
    p_bar = float(p_i.mean())
    p_j = table.sum(axis=0) / (n_items * n)
    p_e = float(np.sum(p_j**2))
    if abs(1.0 - p_e) < 1e-12:
        return None
    return (p_bar - p_e) / (1.0 - p_e)


def kappa_from_label_matrix(labels: Sequence[Sequence[str]], categories: Sequence[str] = ("I", "O")) -> float | None:
    """Fleiss kappa from per-item rater label lists (items = words)."""
    counts = []
    for item in labels:
        counts.append([sum(1 for lab in item if lab == cat) for cat in categories])
    return fleiss_kappa(counts)


def roc_auc(labels: Sequence[int] | np.ndarray, scores: Sequence[float] | np.ndarray) -> float:
    """Rank-statistic AUC (ties get average rank)."""
    y = np.asarray(labels, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise MetricsError("labels and scores must align")
    pos = int(np.sum(y == 1))
    neg = int(np.sum(y == 0))
    if pos == 0 or neg == 0:
        raise MetricsError("AUC needs both positive and negative labels")
    from scipy.stats import rankdata

    ranks = rankdata(s)
    return float((np.sum(ranks[y == 1]) - pos * (pos + 1) / 2) / (pos * neg))
