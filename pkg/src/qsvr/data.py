"""Data sets, PCA reduction, min-max scaling, the Toy generator and splits.

CSV schema: a header row, one numeric column per feature and an integer
``label`` column (0 normal, 1 anomaly).  Raw files that carry their
original class column can be mapped on load with one of the
:data:`CLASS_RULES`.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    provenance: str = ""
    feature_names: tuple = ()
    ids: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.labels).reshape(-1)
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} labels")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 (normal) or 1 (anomaly)")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y.astype(int))
        names = tuple(self.feature_names) or tuple(f"f{i}" for i in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError("feature_names length does not match feature count")
        object.__setattr__(self, "feature_names", names)
        ids = np.arange(X.shape[0]) if self.ids is None else np.asarray(self.ids, dtype=int)
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx, name: str | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.features[idx], self.labels[idx], name or self.name,
                       self.provenance, self.feature_names, self.ids[idx])

    def with_features(self, features, feature_names: tuple = ()) -> "Dataset":
        return Dataset(features, self.labels, self.name, self.provenance, feature_names, self.ids)


# ---------------------------------------------------------------------------
# Class rules for the raw label columns of the benchmark data sets
# ---------------------------------------------------------------------------


def _in_range(lo: int, hi: int) -> Callable[[str], int]:
    def rule(cell: str) -> int:
        return 0 if lo <= int(float(cell)) <= hi else 1
    return rule


def _named_normal(*normal: str) -> Callable[[str], int]:
    normal = {s.lower() for s in normal}

    def rule(cell: str) -> int:
        return 0 if cell.strip().lower().rstrip(".") in normal else 1
    return rule


def _letters_a_to_m(cell: str) -> int:
    c = cell.strip()
    if c.isalpha():
        return 0 if c.upper() <= "M" else 1
    # EMNIST-letters stores A..Z as 1..26
    return 0 if int(float(c)) <= 13 else 1


def _binary(cell: str) -> int:
    v = float(cell)
    if v not in (0.0, 1.0):
        raise ValueError(f"label {cell!r} is not 0 or 1")
    return int(v)


CLASS_RULES: dict[str, Callable[[str], int]] = {
    "binary": _binary,
    "toy": _binary,
    "cc": _binary,
    "census": _named_normal("<=50k"),
    "covert": _in_range(1, 4),
    "doh": _named_normal("benign"),
    "emnist": _letters_a_to_m,
    "fmnist": _in_range(0, 4),
    "kdd": _named_normal("normal"),
    "mnist": _in_range(0, 4),
    "mammo": _named_normal("normal", "-1", "0"),
    "url": _named_normal("benign"),
}


def load_csv(path, label_column: str = "label", class_rule: str | Callable | None = None,
             name: str | None = None) -> Dataset:
    """Read a data set CSV.

    Parameters
    ----------
    path : path-like
        File with a header row.
    label_column : str
        Column holding the class.  Every other column must be numeric.
    class_rule : str or callable, optional
        Key of :data:`CLASS_RULES` or a function mapping a raw label cell to
        0/1.  Defaults to plain 0/1 labels.
    """
    path = Path(path)
    rule = CLASS_RULES["binary"] if class_rule is None else (
        CLASS_RULES[class_rule.lower()] if isinstance(class_rule, str) else class_rule)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ValueError(f"{path}: no label column {label_column!r} (columns: {header})")
        li = header.index(label_column)
        feature_cols = [i for i in range(len(header)) if i != li]
        rows, labels = [], []
        for r, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: row {r} has {len(row)} cells, header has {len(header)}")
            try:
                rows.append([float(row[i]) for i in feature_cols])
            except ValueError:
                bad = next(header[i] for i in feature_cols if not _is_float(row[i]))
                raise ValueError(f"{path}: row {r}, column {bad!r} is not numeric") from None
            try:
                labels.append(rule(row[li]))
            except ValueError as exc:
                raise ValueError(f"{path}: row {r}: bad label ({exc})") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return Dataset(np.array(rows), np.array(labels), name or path.stem, f"csv:{path}",
                   tuple(header[i] for i in feature_cols))


def _is_float(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def save_csv(dataset: Dataset, path, extra_columns: dict | None = None) -> Path:
    """Write ``dataset`` in the CSV schema, values at full precision.

    ``extra_columns`` maps column names to per-row values appended after the
    label (used for adversarial sets).
    """
    path = Path(path)
    extra = extra_columns or {}
    for k, v in extra.items():
        if len(v) != len(dataset):
            raise ValueError(f"extra column {k!r} has {len(v)} values for {len(dataset)} rows")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(dataset.feature_names) + ["label"] + list(extra))
        for r in range(len(dataset)):
            w.writerow([repr(float(v)) for v in dataset.features[r]] + [int(dataset.labels[r])]
                       + [_fmt(extra[k][r]) for k in extra])
    return path


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# PCA and min-max scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, n_features), rows are directions
    explained_variance: np.ndarray
    rank_deficient: bool = False


def fit_pca(features, k: int = 5) -> PcaModel:
    """Top-``k`` eigendirections of the sample covariance.

    Each direction is signed so its largest-magnitude entry is positive.
    Directions beyond the numerical rank are replaced by zeros and the model
    is flagged ``rank_deficient``.
    """
    X = np.asarray(features, dtype=float)
    n, f = X.shape
    if k > f:
        raise ValueError(f"cannot keep {k} components of {f} features")
    if n < k:
        raise ValueError(f"need at least {k} samples, got {n}")
    mean = X.mean(axis=0)
    cov = np.cov(X - mean, rowvar=False, ddof=1).reshape(f, f)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:k]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order].T.copy()
    pivot = np.argmax(np.abs(comps), axis=1)
    comps *= np.sign(comps[np.arange(k), pivot])[:, None]
    tol = max(evals.max(initial=0.0), 1.0) * f * np.finfo(float).eps * 10
    dead = evals <= tol
    if dead.any():
        warnings.warn(f"PCA input has rank {int((~dead).sum())} < {k}; "
                      "zero-padding trailing components", RuntimeWarning, stacklevel=2)
        comps[dead] = 0.0
        evals[dead] = 0.0
    return PcaModel(mean, comps, evals, bool(dead.any()))


def transform(model: PcaModel, features) -> np.ndarray:
    return (np.asarray(features, dtype=float) - model.mean) @ model.components.T


@dataclass(frozen=True)
class Normalizer:
    minimum: np.ndarray
    maximum: np.ndarray

    @property
    def constant(self) -> np.ndarray:
        return self.maximum == self.minimum


def fit_minmax(features) -> Normalizer:
    X = np.asarray(features, dtype=float)
    lo, hi = X.min(axis=0), X.max(axis=0)
    if (hi == lo).any():
        log.warning("constant feature(s) %s map to 0.5", np.flatnonzero(hi == lo).tolist())
    return Normalizer(lo, hi)


def normalize(normalizer: Normalizer, features) -> np.ndarray:
    """Scale into ``[0, 1]`` with the fitted range, clamping outliers."""
    X = np.asarray(features, dtype=float)
    span = normalizer.maximum - normalizer.minimum
    safe = np.where(span > 0, span, 1.0)
    out = np.clip((X - normalizer.minimum) / safe, 0.0, 1.0)
    return np.where(span > 0, out, 0.5)


# ---------------------------------------------------------------------------
# Toy data and splits
# ---------------------------------------------------------------------------

TOY_FEATURES = 5
TOY_NORMAL_RANGE = (0.0, 0.3)
TOY_ANOMALY_RANGE = (0.7, 1.0)


def toy_generate(n_normal: int = 500, n_anomaly: int = 500, seed: int = 0,
                 n_features: int = TOY_FEATURES) -> Dataset:
    """Linearly separable data with a 0.4 gap along feature 0.

    Feature 0 is uniform on [0, 0.3] for normals and [0.7, 1] for anomalies;
    all other features are uniform on [0, 1] for both classes.
    """
    if n_normal <= 0 or n_anomaly <= 0:
        raise ValueError("class counts must be positive")
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n_normal + n_anomaly, n_features))
    X[:n_normal, 0] = rng.uniform(*TOY_NORMAL_RANGE, size=n_normal)
    X[n_normal:, 0] = rng.uniform(*TOY_ANOMALY_RANGE, size=n_anomaly)
    y = np.r_[np.zeros(n_normal, int), np.ones(n_anomaly, int)]
    return Dataset(X, y, "toy", f"toy_generate(seed={seed})")


SPLIT_POLICIES = {
    "simulation": (100, 100),
    "hardware": (30, 50),
}


def make_splits(dataset: Dataset, policy: str = "simulation", seed: int = 0) -> tuple[Dataset, Dataset]:
    """All-normal training set and a disjoint, class-balanced test set."""
    if policy not in SPLIT_POLICIES:
        raise ValueError(f"unknown split policy {policy!r}; expected {sorted(SPLIT_POLICIES)}")
    n_train, n_test = SPLIT_POLICIES[policy]
    half = n_test // 2
    normal = np.flatnonzero(dataset.labels == 0)
    anomal = np.flatnonzero(dataset.labels == 1)
    if len(normal) < n_train + half or len(anomal) < half:
        raise ValueError(f"{dataset.name}: need {n_train + half} normal and {half} anomalous "
                         f"samples, have {len(normal)} and {len(anomal)}")
    rng = np.random.default_rng(seed)
    normal = rng.permutation(normal)
    anomal = rng.permutation(anomal)
    train = dataset.subset(np.sort(normal[:n_train]), f"{dataset.name}-train")
    test_idx = np.r_[np.sort(normal[n_train:n_train + half]), np.sort(anomal[:half])]
    test = dataset.subset(test_idx, f"{dataset.name}-test")
    return train, test


@dataclass(frozen=True)
class Prepared:
    train: Dataset
    test: Dataset
    pca: PcaModel | None = None
    normalizer: Normalizer | None = None
    raw_test: Dataset | None = field(default=None, repr=False)


def prepare(dataset: Dataset, policy: str = "simulation", seed: int = 0,
            n_components: int = 5, preprocess: bool = True) -> Prepared:
    """Split, then reduce and normalise with models fitted on the training set.

    With ``preprocess=False`` the features are used as they are (they must
    already lie in [0, 1], as the Toy data does).
    """
    train, test = make_splits(dataset, policy, seed)
    if not preprocess:
        for part in (train, test):
            if part.features.min() < 0 or part.features.max() > 1:
                raise ValueError(f"{part.name}: features outside [0, 1] need preprocessing")
        return Prepared(train, test, raw_test=test)
    pca = None
    tr, te = train.features, test.features
    if n_components and tr.shape[1] > n_components:
        pca = fit_pca(tr, n_components)
        tr, te = transform(pca, tr), transform(pca, te)
    norm = fit_minmax(tr)
    names = tuple(f"pc{i}" for i in range(tr.shape[1])) if pca is not None else train.feature_names
    return Prepared(train.with_features(normalize(norm, tr), names),
                    test.with_features(normalize(norm, te), names), pca, norm, raw_test=test)
