"""Ranking metrics for link prediction."""

import numpy as np
from scipy.stats import rankdata


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise ValueError("both classes must be present")
    return scores, labels.astype(bool), n_pos


def auc(scores, labels) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg), ties count 1/2."""
    scores, labels, n_pos = _check(scores, labels)
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)  # average ranks handle ties
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Mean of precision@rank over positives, scores descending, ties by index."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if not labels.any():
        raise ValueError("average_precision needs at least one positive")
    order = np.lexsort((np.arange(scores.size), -scores))
    hits = labels[order].astype(bool)
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(precision[hits].mean())


def mean_and_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return float("nan"), float("nan")
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se
