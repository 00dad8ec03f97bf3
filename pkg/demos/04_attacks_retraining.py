"""PGD attacks on the anomaly score and adversarial retraining.

Anomalies are pushed to look normal and normal samples to look anomalous,
within an l-infinity budget and the unit input box.
"""
# %%
from qsvr import (AttackConfig, FeatureMapSpec, adversarial_retrain, auc, build_adversarial_set,
                  classify, fit_detector, perturbed_features, prepare, toy_generate)

prep = prepare(toy_generate(seed=0), "simulation", seed=0, preprocess=False)
Xtr, Xte, yte = prep.train.features, prep.test.features, prep.test.labels
det = fit_detector(Xtr, FeatureMapSpec(5))
print(f"clean AUC {auc(det.scores(Xte), yte):.3f}")

# %% AUC against the attack budget
for eps in (0.01, 0.1, 0.3):
    adv = build_adversarial_set(det, Xte, yte, AttackConfig(epsilon=eps, iterations=50))
    P = perturbed_features(adv)
    print(f"eps={eps:<5} AUC {auc(det.scores(P), yte):.3f}  max |dx| {max(a.linf for a in adv):.3f}")

# %% retrain on perturbed normal data and attack the new model again
cfg = AttackConfig(epsilon=0.1)
re = adversarial_retrain(Xtr, det.spec, attack_config=cfg, baseline=det)
for name, model in (("original", det), ("retrained", re)):
    P = perturbed_features(build_adversarial_set(model, Xte, yte, cfg))
    c = classify(model, model.scores(P), yte)
    print(f"{name:9s} adversarial AUC {auc(model.scores(P), yte):.3f}  normal ratio {c.normal_ratio:.2f}")
