"""Epsilon-SVR on precomputed kernels and the reconstruction-loss detector.

The dual is solved in the usual doubled form over ``alpha = (a, a*)`` with
``beta = a - a*``::

    min  1/2 alpha' Q alpha + p' alpha
    s.t. z' alpha = 0,  0 <= alpha <= C

where ``z = (1, ..., 1, -1, ..., -1)``, ``p = (eps - y, eps + y)`` and
``Q = z z' * [[K, K], [K, K]]``.  Working pairs are picked with second-order
information (the LIBSVM selection rule) and each pair is optimised
analytically.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .kernel import FeatureMapSpec, GramMatrix, embed_effects, embed_states, gram, overlap_matrix
from .simulator import IDEAL, NoiseModel

log = logging.getLogger(__name__)

_TAU = 1e-12


@dataclass(frozen=True)
class SvrConfig:
    C: float = 1.0
    tube_epsilon: float = 0.1
    kkt_tolerance: float = 1e-3
    max_iterations: int = 100_000

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if not self.tube_epsilon >= 0:
            raise ValueError(f"tube_epsilon must be non-negative, got {self.tube_epsilon}")
        if not self.kkt_tolerance > 0:
            raise ValueError(f"kkt_tolerance must be positive, got {self.kkt_tolerance}")
        if int(self.max_iterations) < 1:
            raise ValueError("max_iterations must be positive")


@dataclass(frozen=True)
class SvrModel:
    """Fitted regressor ``f(x) = sum_i beta_i k(x_i, x) + bias``."""

    beta: np.ndarray
    bias: float
    config: SvrConfig = field(default_factory=SvrConfig)
    n_iter: int = 0
    max_violation: float = 0.0
    converged: bool = True

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.beta) > 1e-12)

    @property
    def n_support(self) -> int:
        return int(self.support.size)


def dual_objective(beta, K, y, tube_epsilon: float) -> float:
    """``-1/2 b'Kb - eps sum|b| + y'b`` (the quantity the solver maximises)."""
    beta = np.asarray(beta, dtype=float)
    K = np.asarray(K, dtype=float)
    return float(-0.5 * beta @ K @ beta - tube_epsilon * np.abs(beta).sum() + np.asarray(y) @ beta)


def _check_gram(K: np.ndarray) -> np.ndarray:
    K = np.asarray(K.values if isinstance(K, GramMatrix) else K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"Gram matrix must be square, got shape {K.shape}")
    if not np.allclose(K, K.T, rtol=0.0, atol=1e-10):
        raise ValueError("Gram matrix is not symmetric")
    return K


def solve_dual(K, targets, config: SvrConfig | None = None) -> SvrModel:
    """Fit an epsilon-SVR on a precomputed self-Gram matrix.

    Stops once the maximal KKT violation ``m(alpha) - M(alpha)`` drops below
    ``config.kkt_tolerance``; hitting ``max_iterations`` first is reported
    through ``converged=False`` and a :class:`RuntimeWarning`.
    """
    cfg = config or SvrConfig()
    K = _check_gram(K)
    y = np.asarray(targets, dtype=float)
    n = K.shape[0]
    if y.shape != (n,):
        raise ValueError(f"need {n} targets, got shape {y.shape}")
    if n == 0:
        raise ValueError("cannot fit on an empty training set")

    C = float(cfg.C)
    z = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([cfg.tube_epsilon - y, cfg.tube_epsilon + y])
    K2 = np.block([[K, K], [K, K]])
    Q = z[:, None] * z[None, :] * K2
    QD = np.diag(K2).copy()
    alpha = np.zeros(2 * n)
    G = p.copy()

    n_iter = 0
    gap = np.inf
    while True:
        at_upper = alpha >= C
        at_lower = alpha <= 0
        up = np.where(z > 0, ~at_upper, ~at_lower)
        low = np.where(z > 0, ~at_lower, ~at_upper)
        score = -z * G
        if not up.any() or not low.any():
            gap = 0.0
            break
        masked = np.where(up, score, -np.inf)
        i = int(np.argmax(masked))
        g_max = masked[i]
        g_min = np.min(np.where(low, score, np.inf))
        gap = g_max - g_min
        if gap < cfg.kkt_tolerance or n_iter >= cfg.max_iterations:
            break

        b = g_max - score
        cand = low & (b > 0)
        quad = QD[i] + QD - 2.0 * K2[i]
        quad = np.where(quad > 0, quad, _TAU)
        gain = np.where(cand, -(b * b) / quad, np.inf)
        j = int(np.argmin(gain))

        ai_old, aj_old = alpha[i], alpha[j]
        ai, aj = _pair_update(ai_old, aj_old, G[i], G[j], z[i], z[j], QD[i], QD[j], Q[i, j], C)
        alpha[i], alpha[j] = ai, aj
        G += Q[:, i] * (ai - ai_old) + Q[:, j] * (aj - aj_old)
        n_iter += 1

    converged = gap < cfg.kkt_tolerance
    if not converged:
        warnings.warn(f"SVR dual hit max_iterations={cfg.max_iterations} "
                      f"with KKT violation {gap:.3e}", RuntimeWarning, stacklevel=2)
    beta = alpha[:n] - alpha[n:]
    bias = -_rho(alpha, G, z, C)
    return SvrModel(beta, float(bias), cfg, n_iter, float(gap), bool(converged))


def _pair_update(ai, aj, gi, gj, zi, zj, qii, qjj, qij, C):
    """Analytic two-variable step with box clipping (LIBSVM update rules)."""
    if zi != zj:
        quad = qii + qjj + 2.0 * qij
        quad = quad if quad > 0 else _TAU
        delta = (-gi - gj) / quad
        diff = ai - aj
        ai += delta
        aj += delta
        if diff > 0:
            if aj < 0:
                aj, ai = 0.0, diff
        elif ai < 0:
            ai, aj = 0.0, -diff
        if diff > 0:
            if ai > C:
                ai, aj = C, C - diff
        elif aj > C:
            aj, ai = C, C + diff
    else:
        quad = qii + qjj - 2.0 * qij
        quad = quad if quad > 0 else _TAU
        delta = (gi - gj) / quad
        total = ai + aj
        ai -= delta
        aj += delta
        if total > C:
            if ai > C:
                ai, aj = C, total - C
        elif aj < 0:
            aj, ai = 0.0, total
        if total > C:
            if aj > C:
                aj, ai = C, total - C
        elif ai < 0:
            ai, aj = 0.0, total
    return ai, aj


def _rho(alpha, G, z, C):
    """Offset from free variables, or the midpoint of the feasible interval."""
    zg = z * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(zg[free].mean())
    at_upper = alpha >= C
    ub_mask = (at_upper & (z < 0)) | (~at_upper & (z > 0))
    lb_mask = (at_upper & (z > 0)) | (~at_upper & (z < 0))
    ub = zg[ub_mask].min() if ub_mask.any() else np.inf
    lb = zg[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2)


def predict(model: SvrModel, kernel_row) -> float | np.ndarray:
    """``sum_i beta_i kernel_row_i + bias``; a 2-D input is a batch of rows."""
    row = np.asarray(kernel_row, dtype=float)
    if row.shape[-1] != model.beta.shape[0]:
        raise ValueError(f"kernel row has length {row.shape[-1]}, model has {model.beta.shape[0]} samples")
    # einsum, not BLAS: the result must not depend on how rows are batched
    out = np.einsum("...i,i->...", row, model.beta) + model.bias
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Reconstruction-loss anomaly detector
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnomalyDetector:
    """One SVR per feature, each regressing that feature from the encoded input.

    ``models[d]`` is ``None`` for a feature that was constant in training; its
    residual is then measured against ``means[d]``.

    ``kernel`` selects the kernel used for scoring: ``"quantum"`` (the fidelity
    kernel of ``spec`` under ``noise_model``) or ``"rbf"`` with width ``gamma``.
    """

    models: tuple
    means: np.ndarray
    train_features: np.ndarray
    spec: FeatureMapSpec
    noise_model: NoiseModel = IDEAL
    threshold: float = np.inf
    kernel: str = "quantum"
    gamma: float = 1.0

    @property
    def n_features(self) -> int:
        return self.train_features.shape[1]

    @cached_property
    def _train_effects(self) -> np.ndarray:
        return embed_effects(self.train_features, self.spec, self.noise_model)

    def cross_kernel(self, X: np.ndarray, check_range: bool = True) -> np.ndarray:
        """``K[t, i] = k(x_train_i, X[t])``, i.e. rows are the samples of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kernel == "rbf":
            return rbf_kernel(X, self.train_features, self.gamma)
        states = embed_states(X, self.spec, self.noise_model, check_range=check_range)
        return overlap_matrix(self._train_effects, states).T

    def scores(self, X, check_range: bool = True) -> np.ndarray:
        """Mean squared reconstruction residual of every row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        if len(X) == 0:
            return np.zeros(0)
        rows = self.cross_kernel(X, check_range=check_range)
        recon = np.empty_like(X)
        for d, model in enumerate(self.models):
            recon[:, d] = self.means[d] if model is None else predict(model, rows)
        return np.mean((recon - X) ** 2, axis=1)


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def fit_detector(train_features, spec: FeatureMapSpec | None = None,
                 noise_model: NoiseModel | None = None, svr_config: SvrConfig | None = None,
                 *, kernel: str = "quantum", gamma: float = 1.0,
                 threshold_quantile: float = 1.0, train_gram: GramMatrix | None = None) -> AnomalyDetector:
    """Train the reconstruction ensemble on (all-normal) training data.

    The decision threshold is the ``threshold_quantile`` quantile of the
    training scores; the default 1.0 is the maximum training score.  A
    precomputed ``train_gram`` (e.g. from :func:`qsvr.kernel.load_gram`) skips
    the kernel evaluation.
    """
    X = np.asarray(train_features, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("training features must be a non-empty 2-D array")
    if X.min() < 0.0 or X.max() > 1.0:
        raise ValueError("training features must be normalised to [0, 1]")
    cfg = svr_config or SvrConfig()
    nm = noise_model or IDEAL
    if spec is None:
        spec = FeatureMapSpec(X.shape[1])
    if kernel == "quantum":
        if spec.n_features != X.shape[1]:
            raise ValueError(f"spec expects {spec.n_features} features, data has {X.shape[1]}")
        K = train_gram.values if train_gram is not None else gram(X, spec=spec, noise_model=nm).values
    elif kernel == "rbf":
        K = rbf_kernel(X, X, gamma)
    else:
        raise ValueError(f"unknown kernel {kernel!r}")

    if len(X) > 1 and np.ptp(K) < 1e-12:
        warnings.warn("training Gram matrix is degenerate (all entries equal)", RuntimeWarning, stacklevel=2)

    means = X.mean(axis=0)
    models = []
    for d in range(X.shape[1]):
        if np.ptp(X[:, d]) == 0.0:
            log.info("feature %d is constant in training; scoring it against its mean", d)
            models.append(None)
        else:
            models.append(solve_dual(K, X[:, d], cfg))
    det = AnomalyDetector(tuple(models), means, X.copy(), spec, nm, np.inf, kernel, float(gamma))
    train_scores = det.scores(X)
    return replace(det, threshold=float(np.quantile(train_scores, threshold_quantile)))


def anomaly_score(detector: AnomalyDetector, x) -> float:
    """Reconstruction error of a single normalised sample."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("anomaly_score takes one 1-D sample; use detector.scores for batches")
    return float(detector.scores(x[None, :])[0])


@dataclass(frozen=True)
class Classification:
    labels: np.ndarray
    normal_ratio: float
    anomaly_ratio: float


def classify(detector: AnomalyDetector | float, scores, true_labels=None) -> Classification:
    """Threshold scores (anomaly iff ``score > threshold``).

    With ``true_labels`` the class-conditional ratios ``tn/(tn+fp)`` and
    ``tp/(tp+fn)`` are filled in (NaN for a class that is absent).
    """
    threshold = detector.threshold if isinstance(detector, AnomalyDetector) else float(detector)
    scores = np.asarray(scores, dtype=float)
    pred = (scores > threshold).astype(int)
    if true_labels is None:
        return Classification(pred, float("nan"), float("nan"))
    y = np.asarray(true_labels).astype(int)
    if y.shape != pred.shape:
        raise ValueError("scores and labels differ in length")
    normal = y == 0
    anomal = y == 1
    tn_ratio = float(np.mean(pred[normal] == 0)) if normal.any() else float("nan")
    tp_ratio = float(np.mean(pred[anomal] == 1)) if anomal.any() else float("nan")
    return Classification(pred, tn_ratio, tp_ratio)
