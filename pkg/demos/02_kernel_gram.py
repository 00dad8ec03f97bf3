"""Fidelity kernels and Gram matrices under noise."""
# %%
import tempfile
from pathlib import Path

import numpy as np

from qsvr import FeatureMapSpec, NoiseModel, gram, kernel_class_stats, load_gram, save_gram, toy_generate

ds = toy_generate(20, 20, seed=0)
X, y = ds.features, ds.labels
spec = FeatureMapSpec(X.shape[1])

# %% noiseless self-Gram: symmetric, unit diagonal, positive semidefinite
K = gram(X[y == 0], spec=spec)
print("shape", K.shape, "min eigenvalue", np.linalg.eigvalsh(K.values).min())
print("diagonal range", np.diag(K.values).min(), np.diag(K.values).max())

# %% noise shrinks kernel values towards the maximally mixed overlap
for p in (0.0, 0.05, 0.2):
    G = gram(X, X[y == 0], spec, NoiseModel.of("depolarizing", p))
    stats = kernel_class_stats(G, y)
    print(f"p={p:<5} normal rows {stats[0][0]:.3f}+-{stats[0][1]:.3f}"
          f"  anomalous rows {stats[1][0]:.3f}+-{stats[1][1]:.3f}")

# %% the entrywise route runs every inversion circuit separately and agrees
nm = NoiseModel.of("amplitude_damping", 0.1)
a = gram(X[:4], X[4:8], spec, nm)
b = gram(X[:4], X[4:8], spec, nm, method="entrywise")
print("max |factorized - entrywise|", np.abs(a.values - b.values).max())

# %% Gram matrices round-trip through disk with their configuration hash
with tempfile.TemporaryDirectory() as tmp:
    path = save_gram(a, Path(tmp) / "toy.gram")
    back = load_gram(path, spec, nm)
    print("reloaded identical:", np.array_equal(back.values, a.values))
