"""AUC, two-sample Kolmogorov-Smirnov statistics and data-set diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

_KS_TERM_TOL = 1e-12


@dataclass(frozen=True)
class ScoredSet:
    """Anomaly scores with their 0/1 labels (1 = anomaly)."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float).reshape(-1)
        y = np.asarray(self.labels).reshape(-1)
        if s.shape != y.shape:
            raise ValueError(f"{s.size} scores but {y.size} labels")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 (normal) or 1 (anomaly)")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y.astype(int))


def auc(scored: ScoredSet | np.ndarray, labels=None) -> float:
    """Rank-based (Mann-Whitney) area under the ROC curve.

    Anomalies are the positive class and higher scores mean more anomalous.
    Tied pairs count one half.
    """
    if not isinstance(scored, ScoredSet):
        scored = ScoredSet(scored, labels)
    pos = scored.labels == 1
    n_pos = int(pos.sum())
    n_neg = scored.labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both normal and anomalous samples")
    ranks = rankdata(scored.scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def roc_points(scored: ScoredSet | np.ndarray, labels=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(fpr, tpr, thresholds)`` sweeping the threshold over distinct scores."""
    if not isinstance(scored, ScoredSet):
        scored = ScoredSet(scored, labels)
    y = scored.labels
    order = np.argsort(-scored.scores, kind="mergesort")
    s = scored.scores[order]
    y = y[order]
    distinct = np.r_[np.flatnonzero(np.diff(s)), y.size - 1]
    tps = np.cumsum(y)[distinct]
    fps = (distinct + 1) - tps
    n_pos = max(int(y.sum()), 1)
    n_neg = max(int(y.size - y.sum()), 1)
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    thresholds = np.r_[np.inf, s[distinct]]
    return fpr, tpr, thresholds


def kolmogorov_survival(lam: float) -> float:
    """``P(K > lam)`` for the limiting Kolmogorov distribution.

    Uses the alternating series for ``lam >= 1`` and the Jacobi-transformed
    series below, where the former converges slowly.
    """
    if lam <= 0:
        return 1.0
    if lam < 1.0:
        total = 0.0
        k = 1
        while True:
            term = np.exp(-((2 * k - 1) ** 2) * np.pi ** 2 / (8 * lam * lam))
            total += term
            if term < _KS_TERM_TOL:
                break
            k += 1
        return float(min(1.0, max(0.0, 1.0 - np.sqrt(2 * np.pi) / lam * total)))
    total = 0.0
    k = 1
    while True:
        term = np.exp(-2.0 * k * k * lam * lam)
        total += term if k % 2 else -term
        if term < _KS_TERM_TOL:
            break
        k += 1
    return float(min(1.0, max(0.0, 2.0 * total)))


def ks_statistic(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float).reshape(-1))
    b = np.sort(np.asarray(b, dtype=float).reshape(-1))
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs two non-empty samples")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sided two-sample KS test with the asymptotic p-value.

    Returns ``(D, p)`` with ``p = Q_KS(sqrt(n m / (n + m)) D)``.
    """
    d = ks_statistic(a, b)
    n, m = np.size(a), np.size(b)
    return d, kolmogorov_survival(np.sqrt(n * m / (n + m)) * d)


@dataclass(frozen=True)
class Diagnostics:
    min_ks_pvalue: float
    max_variance: float
    pvalues: np.ndarray
    variances: np.ndarray
    normalized: bool | None = None


def dataset_diagnostics(features, labels, normalized: bool | None = None) -> Diagnostics:
    """Feature-wise KS p-value between classes and feature-wise variance.

    Reports the smallest p-value and the largest (population) variance over
    the whole set.  ``normalized`` is only recorded, to say which
    representation the numbers refer to.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels).astype(int)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("features must be 2-D with one label per row")
    normal, anomal = X[y == 0], X[y == 1]
    if len(normal) == 0 or len(anomal) == 0:
        raise ValueError("diagnostics need both classes present")
    pvals = np.array([ks_two_sample(normal[:, f], anomal[:, f])[1] for f in range(X.shape[1])])
    # exact zero for constant columns (np.var leaves mean-rounding residue)
    variances = np.where(np.ptp(X, axis=0) == 0, 0.0, X.var(axis=0))
    return Diagnostics(float(pvals.min()), float(variances.max()), pvals, variances, normalized)
