import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsvr.attacks import (AttackConfig, adversarial_retrain, attack_loss, build_adversarial_set,
                          input_gradient, perturbed_features, pgd_attack)
from qsvr.data import prepare, toy_generate
from qsvr.kernel import FeatureMapSpec
from qsvr.metrics import auc
from qsvr.simulator import NoiseModel
from qsvr.svr import fit_detector

seeds = st.integers(0, 2**32 - 1)


def square0(X):
    return X[:, 0] ** 2


def planted(X):
    return np.sin(3 * X[:, 0]) * X[:, 1] + X[:, 2] ** 3 + np.exp(X[:, 0] * X[:, 2])


def planted_grad(x):
    return np.array([3 * np.cos(3 * x[0]) * x[1] + x[2] * np.exp(x[0] * x[2]),
                     np.sin(3 * x[0]),
                     3 * x[2] ** 2 + x[0] * np.exp(x[0] * x[2])])


@pytest.fixture(scope="module")
def toy_detector():
    prep = prepare(toy_generate(seed=0), "simulation", seed=0, preprocess=False)
    return fit_detector(prep.train.features), prep


# --- config -----------------------------------------------------------------


def test_config_defaults_and_validation():
    cfg = AttackConfig(epsilon=0.3, iterations=50)
    assert cfg.step == pytest.approx(0.006)
    for kw in ({"epsilon": -0.1}, {"iterations": 0}, {"h": 0.0},
               {"epsilon": 0.3, "alpha": 0.001}, {"lower": 1.0, "upper": 0.0}):
        with pytest.raises(ValueError):
            AttackConfig(**kw)


# --- gradients --------------------------------------------------------------


def test_gradient_of_planted_square():
    g = input_gradient(square0, np.array([0.3, 0.5, 0.5]), 0)
    np.testing.assert_allclose(g, [0.6, 0, 0], atol=1e-8)


def test_label_flip_negates_gradient():
    x = np.array([0.2, 0.7, 0.4])
    np.testing.assert_array_equal(input_gradient(planted, x, 1), -input_gradient(planted, x, 0))


@settings(max_examples=50, deadline=None)
@given(seed=seeds)
def test_gradient_matches_closed_form(seed):
    x = np.random.default_rng(seed).random(3)
    np.testing.assert_allclose(input_gradient(planted, x, 0, h=1e-4), planted_grad(x), atol=1e-4)


@settings(max_examples=30, deadline=None)
@given(seed=seeds)
def test_step_halving_consistency(seed):
    x = np.random.default_rng(seed).uniform(0.1, 0.9, 3)
    h = 1e-2
    g_h = input_gradient(planted, x, 0, h)
    g_h2 = input_gradient(planted, x, 0, h / 2)
    # central differences err by c h^2, so the h/2 error is about |g_h - g_h2| / 3
    richardson = np.abs(g_h - g_h2) / 3
    assert np.all(np.abs(g_h2 - planted_grad(x)) <= 4 * richardson + 1e-10)


def test_gradient_needs_1d_input():
    with pytest.raises(ValueError):
        input_gradient(square0, np.zeros((2, 3)), 0)


def test_gradient_through_detector_matches_closed_difference(toy_detector):
    det, prep = toy_detector
    x = prep.test.features[3]
    g = input_gradient(det, x, 0)
    e = np.zeros_like(x)
    e[1] = 1e-6
    fd = (det.scores((x + e)[None])[0] - det.scores((x - e)[None])[0]) / 2e-6
    assert g[1] == pytest.approx(fd, rel=1e-3, abs=1e-6)


# --- PGD --------------------------------------------------------------------


def test_zero_budget_is_identity():
    x = np.array([0.2, 0.4, 0.6])
    adv = pgd_attack(planted, x, 0, AttackConfig(epsilon=0.0))
    np.testing.assert_array_equal(adv.perturbed, x)


def test_constant_sign_gradient_telescopes():
    x = np.array([0.3, 0.5, 0.6])
    adv = pgd_attack(lambda X: X.sum(axis=1), x, 0, AttackConfig(epsilon=0.1, iterations=50))
    np.testing.assert_allclose(adv.perturbed, x + 0.1, atol=1e-12)
    adv = pgd_attack(lambda X: X.sum(axis=1), x, 1, AttackConfig(epsilon=0.1, iterations=50))
    np.testing.assert_allclose(adv.perturbed, x - 0.1, atol=1e-12)


def test_projection_onto_input_range():
    x = np.array([0.98, 0.02])
    adv = pgd_attack(lambda X: X[:, 0] - X[:, 1], x, 0, AttackConfig(epsilon=0.1, iterations=10))
    np.testing.assert_allclose(adv.perturbed, [1.0, 0.0], atol=1e-12)


def test_zero_gradient_leaves_input():
    x = np.array([0.4, 0.4])
    adv = pgd_attack(lambda X: np.ones(len(X)), x, 0, AttackConfig(epsilon=0.2))
    np.testing.assert_array_equal(adv.perturbed, x)


@settings(max_examples=20, deadline=None)
@given(seed=seeds, eps=st.sampled_from([0.01, 0.1, 0.3]))
def test_invariants_on_planted_targets(seed, eps):
    rng = np.random.default_rng(seed)
    X = rng.random((8, 3))
    y = rng.integers(0, 2, 8)
    cfg = AttackConfig(epsilon=eps, iterations=20)
    adv = build_adversarial_set(planted, X, y, cfg)
    P = perturbed_features(adv)
    assert np.all(np.abs(P - X) <= eps + 1e-12)
    assert P.min() >= 0 and P.max() <= 1
    assert np.all(attack_loss(planted, P, y) >= attack_loss(planted, X, y))


def test_empty_set():
    assert build_adversarial_set(planted, np.zeros((0, 3)), np.zeros(0), AttackConfig()) == []


def test_label_count_mismatch():
    with pytest.raises(ValueError):
        build_adversarial_set(planted, np.zeros((3, 3)), [0, 1], AttackConfig())


def test_detector_attack_invariants(toy_detector):
    det, prep = toy_detector
    X, y = prep.test.features[::10], prep.test.labels[::10]
    cfg = AttackConfig(epsilon=0.1, iterations=10)
    adv = build_adversarial_set(det, X, y, cfg)
    for a in adv:
        assert a.linf <= 0.1 + 1e-12
        assert a.perturbed.min() >= 0 and a.perturbed.max() <= 1
        assert a.trace[0] <= max(a.trace)
    P = perturbed_features(adv)
    assert np.all(attack_loss(det, P, y) >= attack_loss(det, X, y))
    # batch and single-sample attacks agree exactly
    single = pgd_attack(det, X[2], y[2], cfg)
    np.testing.assert_array_equal(single.perturbed, adv[2].perturbed)


def test_attack_is_deterministic(toy_detector):
    det, prep = toy_detector
    cfg = AttackConfig(epsilon=0.1, iterations=5)
    a = pgd_attack(det, prep.test.features[60], 1, cfg)
    b = pgd_attack(det, prep.test.features[60], 1, cfg)
    np.testing.assert_array_equal(a.perturbed, b.perturbed)


def test_attacks_lower_auc(toy_detector):
    det, prep = toy_detector
    X, y = prep.test.features, prep.test.labels
    adv = perturbed_features(build_adversarial_set(det, X, y, AttackConfig(epsilon=0.1, iterations=20)))
    assert auc(det.scores(adv), y) < auc(det.scores(X), y)


def test_noisy_detector_rejected():
    X = np.random.default_rng(0).random((5, 2))
    det = fit_detector(X, FeatureMapSpec(2), NoiseModel.of("bitflip", 0.1))
    with pytest.raises(ValueError):
        pgd_attack(det, X[0], 0)


# --- retraining -------------------------------------------------------------


def test_zero_budget_retrain_matches_baseline(toy_detector):
    det, prep = toy_detector
    re = adversarial_retrain(prep.train.features, attack_config=AttackConfig(epsilon=0.0), baseline=det)
    np.testing.assert_array_equal(re.scores(prep.test.features), det.scores(prep.test.features))


def test_retrain_set_within_budget():
    X = np.random.default_rng(3).random((12, 3))
    cfg = AttackConfig(epsilon=0.05, iterations=5)
    base = fit_detector(X)
    re = adversarial_retrain(X, attack_config=cfg, baseline=base)
    assert re.train_features.shape == X.shape
    assert np.all(np.abs(re.train_features - X) <= 0.05 + 1e-12)
    assert not np.array_equal(re.train_features, X)
