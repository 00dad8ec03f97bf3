"""PGD attacks on the reconstruction detector and adversarial retraining.

The attack loss for a sample with label ``y`` is ``(1 - 2y) * score(x)``:
normal samples are pushed towards higher anomaly scores, anomalies towards
lower ones.  Gradients are central finite differences through the exact
noiseless simulator.  Every step moves by ``alpha * sign(grad)`` and is
projected back onto the l-inf ball of radius ``epsilon`` around the clean
input, intersected with the normalised range ``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .kernel import FeatureMapSpec
from .simulator import IDEAL
from .svr import AnomalyDetector, SvrConfig, fit_detector

ScoreTarget = Union[AnomalyDetector, Callable[[np.ndarray], np.ndarray]]

BUDGET_ATOL = 1e-12


@dataclass(frozen=True)
class AttackConfig:
    """PGD parameters; ``alpha`` defaults to ``epsilon / iterations``."""

    epsilon: float = 0.1
    iterations: int = 50
    alpha: float | None = None
    h: float = 1e-4
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if int(self.iterations) < 1:
            raise ValueError("iterations must be positive")
        if not self.h > 0:
            raise ValueError(f"finite-difference step must be positive, got {self.h}")
        if self.alpha is not None and self.alpha * self.iterations < self.epsilon * (1 - 1e-12):
            raise ValueError("alpha * iterations cannot reach the epsilon budget")
        if not self.lower < self.upper:
            raise ValueError("input range must satisfy lower < upper")

    @property
    def step(self) -> float:
        return self.epsilon / self.iterations if self.alpha is None else float(self.alpha)


@dataclass(frozen=True)
class AdversarialSample:
    original: np.ndarray
    perturbed: np.ndarray
    label: int
    epsilon: float
    trace: tuple = ()

    @property
    def linf(self) -> float:
        return float(np.max(np.abs(self.perturbed - self.original), initial=0.0))


def _score_fn(target: ScoreTarget) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(target, AnomalyDetector):
        if not target.noise_model.is_ideal and target.kernel == "quantum":
            raise ValueError("attacks are generated against noiseless detectors")
        return lambda X: target.scores(X, check_range=False)
    return lambda X: np.asarray(target(np.atleast_2d(X)), dtype=float).reshape(-1)


def _sign(y) -> np.ndarray:
    return 1.0 - 2.0 * np.asarray(y, dtype=float)


def attack_loss(target: ScoreTarget, X, y) -> np.ndarray:
    """``(1 - 2y) * score`` for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return _sign(y) * _score_fn(target)(X)


def _batch_gradient(score: Callable, X: np.ndarray, y: np.ndarray, h: float) -> np.ndarray:
    b, k = X.shape
    steps = h * np.eye(k)
    stencil = np.concatenate([X[:, None, :] + steps, X[:, None, :] - steps], axis=1)
    s = score(stencil.reshape(-1, k)).reshape(b, 2 * k)
    grad = (s[:, :k] - s[:, k:]) / (2.0 * h)
    return _sign(y)[:, None] * grad


def input_gradient(target: ScoreTarget, x, y: int, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of the attack loss at ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("input_gradient takes a single 1-D sample")
    return _batch_gradient(_score_fn(target), x[None, :], np.array([y]), h)[0]


def _pgd(score: Callable, X0: np.ndarray, y: np.ndarray, cfg: AttackConfig):
    """Batched PGD returning the best-loss iterate per sample and the loss traces."""
    sign = _sign(y)
    lo = np.maximum(X0 - cfg.epsilon, cfg.lower)
    hi = np.minimum(X0 + cfg.epsilon, cfg.upper)
    X = X0.copy()
    best = X0.copy()
    best_loss = sign * score(X0)
    trace = [best_loss.copy()]
    if cfg.epsilon == 0:
        return best, np.array(trace).T
    for _ in range(int(cfg.iterations)):
        g = _batch_gradient(score, X, y, cfg.h)
        X = np.clip(X + cfg.step * np.sign(g), lo, hi)
        loss = sign * score(X)
        trace.append(loss)
        better = loss > best_loss
        best[better] = X[better]
        best_loss = np.where(better, loss, best_loss)
    return best, np.array(trace).T


def pgd_attack(target: ScoreTarget, x, y: int, config: AttackConfig | None = None) -> AdversarialSample:
    """Deterministic l-inf PGD starting at ``x`` (no random start).

    The returned point is the iterate with the highest attack loss, so the
    loss never ends below its clean value.
    """
    cfg = config or AttackConfig()
    x = np.asarray(x, dtype=float)
    best, trace = _pgd(_score_fn(target), x[None, :], np.array([int(y)]), cfg)
    return AdversarialSample(x.copy(), best[0], int(y), float(cfg.epsilon), tuple(trace[0]))


def build_adversarial_set(target: ScoreTarget, samples, labels,
                          config: AttackConfig | None = None) -> list[AdversarialSample]:
    """Attack every sample; all samples are processed as one batch."""
    cfg = config or AttackConfig()
    X = np.asarray(samples, dtype=float)
    y = np.asarray(labels).astype(int)
    if len(X) == 0:
        return []
    X = np.atleast_2d(X)
    if y.shape != (len(X),):
        raise ValueError("need one label per sample")
    best, trace = _pgd(_score_fn(target), X, y, cfg)
    return [AdversarialSample(X[i].copy(), best[i], int(y[i]), float(cfg.epsilon), tuple(trace[i]))
            for i in range(len(X))]


def perturbed_features(adv: list[AdversarialSample]) -> np.ndarray:
    return np.array([a.perturbed for a in adv])


def adversarial_retrain(train_features, spec: FeatureMapSpec | None = None,
                        svr_config: SvrConfig | None = None,
                        attack_config: AttackConfig | None = None,
                        baseline: AnomalyDetector | None = None,
                        **fit_kwargs) -> AnomalyDetector:
    """Refit on PGD-perturbed copies of the (all-normal) training set.

    The attack targets ``baseline`` (fitted noiselessly on
    ``train_features`` when not given); the new detector sees a training set
    of the same size.
    """
    X = np.asarray(train_features, dtype=float)
    if baseline is None:
        baseline = fit_detector(X, spec, IDEAL, svr_config, **fit_kwargs)
    adv = build_adversarial_set(baseline, X, np.zeros(len(X), int), attack_config)
    return fit_detector(perturbed_features(adv), baseline.spec, IDEAL, svr_config, **fit_kwargs)
