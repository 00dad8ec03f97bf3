"""Anomaly detection with quantum-kernel support vector regression.

A noisy density-matrix simulator evaluates fidelity kernels of an
angle-encoding feature map; an epsilon-SVR per feature reconstructs the
input and the mean squared residual serves as the anomaly score.  The
package also provides PGD attacks on that score, adversarial retraining,
evaluation metrics and the experiment grids behind the ``qsvr`` command.
"""

from .attacks import (AdversarialSample, AttackConfig, adversarial_retrain, attack_loss,
                      build_adversarial_set, input_gradient, pgd_attack, perturbed_features)
from .data import (Dataset, Normalizer, PcaModel, Prepared, fit_minmax, fit_pca, load_csv,
                   make_splits, normalize, prepare, save_csv, toy_generate, transform)
from .kernel import (FeatureMapSpec, GramFormatError, GramMatrix, GramVerificationError,
                     build_feature_map, gram, kernel_class_stats, kernel_value, load_gram,
                     save_gram)
from .metrics import (Diagnostics, ScoredSet, auc, dataset_diagnostics, ks_statistic,
                      ks_two_sample, roc_points)
from .simulator import (CHANNEL_KINDS, IDEAL, DensityMatrix, Gate, KrausChannel, NoiseModel,
                        StateVector, apply_channel, apply_gate, make_channel, run_circuit,
                        validate_channel)
from .svr import (AnomalyDetector, Classification, SvrConfig, SvrModel, anomaly_score, classify,
                  dual_objective, fit_detector, predict, solve_dual)

__version__ = "0.1.0"
