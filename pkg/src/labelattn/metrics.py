"""Evaluation metrics: exact-match accuracy and rank-based ROC AUC."""

from __future__ import annotations

import numpy as np


def accuracy(predictions, truth) -> float:
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape:
        raise ValueError(f"length mismatch: {predictions.shape} vs {truth.shape}")
    return float(np.mean(predictions == truth))


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties receiving the average rank of their group."""
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    starts = np.cumsum(counts) - counts
    avg = starts + (counts + 1) / 2.0
    return avg[inverse]


def auc_roc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score of a positive > score of a negative), ties
    counted half. Raises on single-class input."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError(f"length mismatch: {scores.shape} vs {labels.shape}")
    pos = labels != 0
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("undefined AUC: both classes must be present")
    ranks = _average_ranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def per_class_auc(probs, labels, n_classes: int) -> list[float | None]:
    """One-vs-rest AUC per class; None where a class has no positives or no
    negatives in the labels."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    out: list[float | None] = []
    for c in range(n_classes):
        binary = (labels == c).astype(np.int64)
        if binary.sum() == 0 or binary.sum() == binary.size:
            out.append(None)
        else:
            out.append(auc_roc(probs[:, c], binary))
    return out


def mean_auc(per_class: list[float | None]) -> float:
    present = [v for v in per_class if v is not None]
    if not present:
        return float("nan")
    return float(np.mean(present))
