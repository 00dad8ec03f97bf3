"""Experiment grids: clean benchmark, noise sweep, attack sweep, retraining.

Every run is a pure function of an :class:`ExperimentConfig`; the only
state outside it is the optional Gram cache directory.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from .attacks import AttackConfig, adversarial_retrain, build_adversarial_set, perturbed_features
from .kernel import FeatureMapSpec, config_hash, kernel_class_stats, gram, load_gram, save_gram
from .metrics import auc, dataset_diagnostics, roc_points
from .simulator import IDEAL, INCOHERENT_KINDS, NoiseModel
from .svr import AnomalyDetector, SvrConfig, classify, fit_detector

log = logging.getLogger(__name__)

DEFAULT_STRENGTHS = (0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_EPSILONS = (0.01, 0.1, 0.3)


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple = ("toy",)
    label_column: str = "label"
    class_rule: str | None = None
    split_policy: str = "simulation"
    n_components: int = 5
    seed: int = 0
    toy_normal: int = 500
    toy_anomaly: int = 500
    angle_scale: float = float(np.pi)
    entangler: tuple | None = None
    svr: SvrConfig = field(default_factory=SvrConfig)
    rbf_gamma: float = 1.0
    noise_kinds: tuple = INCOHERENT_KINDS
    noise_strengths: tuple = DEFAULT_STRENGTHS
    miscalibration_steps: int = 20
    miscalibration_axis: str = "x"
    densify_pi: int = 0
    epsilons: tuple = DEFAULT_EPSILONS
    attack_iterations: int = 50
    attack_h: float = 1e-4
    attack_noisy: bool = False
    retrain: bool = False
    n_jobs: int = 1
    gram_cache: str | None = None
    output_dir: str = "results"

    def feature_map(self, n_features: int) -> FeatureMapSpec:
        return FeatureMapSpec(n_features, self.angle_scale, self.entangler)

    def attack(self, epsilon: float) -> AttackConfig:
        return AttackConfig(epsilon, self.attack_iterations, None, self.attack_h)


def noise_grid(config: ExperimentConfig) -> list[NoiseModel]:
    """Incoherent channels x strengths, then the miscalibration sweep.

    The miscalibration sweep has ``miscalibration_steps`` evenly spaced
    overrotations on ``[0, 2 pi]`` plus ``densify_pi`` extra points on
    ``[0.9 pi, 1.1 pi]``.
    """
    grid = [NoiseModel.of(kind, p) for kind in config.noise_kinds for p in config.noise_strengths]
    if config.miscalibration_steps:
        angles = list(np.linspace(0.0, 2 * np.pi, config.miscalibration_steps))
        if config.densify_pi:
            angles += list(np.linspace(0.9 * np.pi, 1.1 * np.pi, config.densify_pi))
        grid += [NoiseModel.of("miscalibration", float(a), rotation_axis=config.miscalibration_axis)
                 for a in angles]
    return grid


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one grid point.

    ``scores``/``labels`` (the evaluated test set) and ``kernel_stats`` are
    carried along for the report files but are not columns of ``records.csv``.
    """

    dataset: str
    model: str
    channel: str
    strength: float
    epsilon: float | None
    retrained: bool
    auc: float
    normal_ratio: float
    anomaly_ratio: float
    seed: int
    evaluations: int = 0
    retrain_epsilon: float | None = None
    wall_time: float = field(default=0.0, compare=False)
    scores: tuple = field(default=(), repr=False)
    labels: tuple = field(default=(), repr=False)
    kernel_stats: tuple = field(default=(), repr=False)

    @property
    def key(self) -> str:
        eps = "clean" if self.epsilon is None else f"eps{self.epsilon:g}"
        tag = f"-rt{self.retrain_epsilon:g}" if self.retrained else ""
        return f"{self.dataset}/{self.model}/{self.channel}/{self.strength:.6g}/{eps}{tag}"

    @property
    def sort_key(self) -> tuple:
        eps = -1.0 if self.epsilon is None else self.epsilon
        rt = -1.0 if self.retrain_epsilon is None else self.retrain_epsilon
        return (self.dataset, self.model, self.channel, self.strength, self.retrained, rt, eps)


RECORD_COLUMNS = ("record", "dataset", "model", "channel", "strength", "epsilon", "retrained",
                  "retrain_epsilon", "auc", "normal_ratio", "anomaly_ratio", "evaluations",
                  "seed", "wall_time")


class SweepIncomplete(RuntimeError):
    """Some grid points failed; ``records`` holds the ones that completed."""

    def __init__(self, records: list, failures: list):
        self.records = records
        self.failures = failures
        super().__init__(f"{len(failures)} grid point(s) failed: "
                         + "; ".join(f"{k}: {e}" for k, e in failures[:5]))


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def load_dataset(source: str, config: ExperimentConfig) -> tuple[data_mod.Dataset, bool]:
    """Return the raw data set and whether it needs PCA/min-max preprocessing."""
    if source == "toy":
        return data_mod.toy_generate(config.toy_normal, config.toy_anomaly, config.seed), False
    ds = data_mod.load_csv(source, config.label_column, config.class_rule)
    return ds, True


def prepared(source: str, config: ExperimentConfig) -> data_mod.Prepared:
    ds, preprocess = load_dataset(source, config)
    return data_mod.prepare(ds, config.split_policy, config.seed, config.n_components, preprocess)


def _train_gram(X: np.ndarray, spec: FeatureMapSpec, nm: NoiseModel, config: ExperimentConfig,
                tag: str):
    if not config.gram_cache:
        return gram(X, spec=spec, noise_model=nm, seed=config.seed)
    cache = Path(config.gram_cache)
    cache.mkdir(parents=True, exist_ok=True)
    # train rows enter the name so different splits never collide
    digest = config_hash(spec, nm) + "-" + hashlib.sha256(np.ascontiguousarray(X).tobytes()).hexdigest()[:8]
    path = cache / f"{tag}-seed{config.seed}-{digest}.gram"
    if path.exists():
        return load_gram(path, spec, nm)
    g = gram(X, spec=spec, noise_model=nm, seed=config.seed)
    save_gram(g, path)
    return g


def fit_quantum(X: np.ndarray, config: ExperimentConfig, nm: NoiseModel = IDEAL,
                tag: str = "train") -> AnomalyDetector:
    spec = config.feature_map(X.shape[1])
    g = _train_gram(X, spec, nm, config, tag)
    return fit_detector(X, spec, nm, config.svr, train_gram=g)


def evaluate(detector: AnomalyDetector, X: np.ndarray, y: np.ndarray, *, dataset: str, model: str,
             epsilon: float | None, config: ExperimentConfig, retrain_epsilon: float | None = None,
             started: float | None = None) -> RunRecord:
    t0 = time.perf_counter() if started is None else started
    rows = detector.cross_kernel(X, check_range=False)
    stats = ()
    evaluations = 0
    if detector.kernel == "quantum":
        stats = tuple(sorted(kernel_class_stats(rows, y).items()))
        evaluations = len(X) + len(detector.train_features)
    scores = detector.scores(X, check_range=False)
    cls = classify(detector, scores, y)
    nm = detector.noise_model
    return RunRecord(dataset, model, nm.kind, float(nm.strength), epsilon, retrain_epsilon is not None,
                     auc(scores, y), cls.normal_ratio, cls.anomaly_ratio, config.seed, evaluations,
                     retrain_epsilon, time.perf_counter() - t0, tuple(scores.tolist()),
                     tuple(int(v) for v in y), stats)


def _name(source: str) -> str:
    return "toy" if source == "toy" else Path(source).stem


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def run_benchmark(config: ExperimentConfig) -> list[RunRecord]:
    """Noiseless quantum-kernel detector and the RBF-kernel SVR baseline."""
    records = []
    for source in config.datasets:
        prep = prepared(source, config)
        Xtr, Xte, yte = prep.train.features, prep.test.features, prep.test.labels
        name = _name(source)
        t0 = time.perf_counter()
        qdet = fit_quantum(Xtr, config, tag=name)
        records.append(evaluate(qdet, Xte, yte, dataset=name, model="qsvr", epsilon=None,
                                config=config, started=t0))
        t0 = time.perf_counter()
        cdet = fit_detector(Xtr, config.feature_map(Xtr.shape[1]), IDEAL, config.svr,
                            kernel="rbf", gamma=config.rbf_gamma)
        records.append(evaluate(cdet, Xte, yte, dataset=name, model="csvr", epsilon=None,
                                config=config, started=t0))
    return records


def _noise_point(args):
    source, nm, config, eval_sets = args
    t0 = time.perf_counter()
    prep = prepared(source, config)
    name = _name(source)
    det = fit_quantum(prep.train.features, config, nm, tag=name)
    out = []
    for epsilon, X, y in eval_sets or [(None, prep.test.features, prep.test.labels)]:
        out.append(evaluate(det, X, y, dataset=name, model="qsvr", epsilon=epsilon,
                            config=config, started=t0))
        t0 = time.perf_counter()
    return out


def _run_grid(tasks: list, config: ExperimentConfig) -> list[RunRecord]:
    records, failures = [], []

    def label(task):
        return f"{_name(task[0])}/{task[1].kind}/{task[1].strength:.6g}"

    if config.n_jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            futures = [(t, pool.submit(_noise_point, t)) for t in tasks]
            for task, fut in futures:
                try:
                    records.extend(fut.result())
                except Exception as exc:  # noqa: BLE001 - reported per grid point
                    failures.append((label(task), exc))
    else:
        for task in tasks:
            try:
                records.extend(_noise_point(task))
            except Exception as exc:  # noqa: BLE001
                log.exception("grid point %s failed", label(task))
                failures.append((label(task), exc))
    if failures:
        raise SweepIncomplete(records, failures)
    return records


def run_noise_sweep(config: ExperimentConfig) -> list[RunRecord]:
    """One detector fit and evaluation per (channel, strength) grid point."""
    tasks = [(source, nm, config, None) for source in config.datasets for nm in noise_grid(config)]
    return _run_grid(tasks, config)


def run_attack_sweep(config: ExperimentConfig) -> list[RunRecord]:
    """Adversarial test sets crafted against the noiseless detector.

    For every data set and epsilon the noiseless detector is evaluated on its
    own adversarial test set.  With ``attack_noisy`` the same sets are scored
    by a freshly fitted detector at every noise grid point.  With ``retrain``
    a detector is also refit on adversarial training data and evaluated on
    clean data and on adversarial data crafted against it.
    """
    records = []
    noisy_tasks = []
    for source in config.datasets:
        prep = prepared(source, config)
        Xtr, Xte, yte = prep.train.features, prep.test.features, prep.test.labels
        name = _name(source)
        t0 = time.perf_counter()
        base = fit_quantum(Xtr, config, tag=name)
        records.append(evaluate(base, Xte, yte, dataset=name, model="qsvr", epsilon=None,
                                config=config, started=t0))
        adv_sets = []
        for eps in config.epsilons:
            t0 = time.perf_counter()
            adv = perturbed_features(build_adversarial_set(base, Xte, yte, config.attack(eps)))
            adv_sets.append((float(eps), adv, yte))
            records.append(evaluate(base, adv, yte, dataset=name, model="qsvr", epsilon=float(eps),
                                    config=config, started=t0))
        if config.retrain:
            records.extend(_retrain_records(base, Xtr, Xte, yte, name, config))
        if config.attack_noisy:
            noisy_tasks += [(source, nm, config, adv_sets) for nm in noise_grid(config)]
    if noisy_tasks:
        try:
            records += _run_grid(noisy_tasks, config)
        except SweepIncomplete as exc:
            raise SweepIncomplete(records + exc.records, exc.failures) from None
    return records


def _retrain_records(base: AnomalyDetector, Xtr, Xte, yte, name: str,
                     config: ExperimentConfig) -> list[RunRecord]:
    out = []
    for eps in config.epsilons:
        t0 = time.perf_counter()
        cfg = config.attack(eps)
        det = adversarial_retrain(Xtr, base.spec, config.svr, cfg, baseline=base)
        out.append(evaluate(det, Xte, yte, dataset=name, model="qsvr", epsilon=None, config=config,
                            retrain_epsilon=float(eps), started=t0))
        t0 = time.perf_counter()
        adv = perturbed_features(build_adversarial_set(det, Xte, yte, cfg))
        out.append(evaluate(det, adv, yte, dataset=name, model="qsvr", epsilon=float(eps),
                            config=config, retrain_epsilon=float(eps), started=t0))
    return out


def run_retrain(config: ExperimentConfig) -> list[RunRecord]:
    """Noiseless attack sweep with the adversarial-retraining pass."""
    return run_attack_sweep(replace(config, retrain=True, attack_noisy=False))


def run_diagnostics(config: ExperimentConfig) -> dict:
    """Feature-wise KS/variance diagnostics of each test set (after preprocessing)."""
    out = {}
    for source in config.datasets:
        prep = prepared(source, config)
        out[_name(source)] = dataset_diagnostics(prep.test.features, prep.test.labels, normalized=True)
    return out


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _sorted(records):
    return sorted(enumerate(records), key=lambda ir: (ir[1].sort_key, ir[0]))


def emit_reports(records: list[RunRecord], output_dir, diagnostics: dict | None = None) -> list[Path]:
    """Write ``records.csv``, ``scores.csv``, ``roc_points.csv``,
    ``kernel_stats.csv`` and ``diagnostics.csv`` into ``output_dir``.

    Rows are ordered by record sort key, so identical records give identical
    files.
    """
    if not records and not diagnostics:
        raise ValueError("nothing to report")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = [r for _, r in _sorted(records)]
    ids = {id(r): f"r{i:04d}" for i, r in enumerate(ordered)}
    paths = []

    def write(name, header, rows):
        path = out / name
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        paths.append(path)

    write("records.csv", RECORD_COLUMNS, (
        [ids[id(r)], r.dataset, r.model, r.channel, _num(r.strength), _num(r.epsilon),
         _num(r.retrained), _num(r.retrain_epsilon), _num(r.auc), _num(r.normal_ratio),
         _num(r.anomaly_ratio), r.evaluations, r.seed, f"{r.wall_time:.6f}"]
        for r in ordered))
    write("scores.csv", ("record", "sample", "label", "score"), (
        [ids[id(r)], i, lab, _num(s)]
        for r in ordered for i, (lab, s) in enumerate(zip(r.labels, r.scores))))
    roc_rows = []
    for r in ordered:
        if r.scores:
            fpr, tpr, thr = roc_points(np.array(r.scores), np.array(r.labels))
            roc_rows += [[ids[id(r)], _num(f), _num(t), _num(h)] for f, t, h in zip(fpr, tpr, thr)]
    write("roc_points.csv", ("record", "fpr", "tpr", "threshold"), roc_rows)
    write("kernel_stats.csv", ("record", "dataset", "channel", "epsilon", "strength", "auc",
                               "class", "mean", "std"), (
        [ids[id(r)], r.dataset, r.channel, _num(r.epsilon), _num(r.strength), _num(r.auc),
         cls, _num(m), _num(s)]
        for r in ordered for cls, (m, s) in r.kernel_stats))
    diag_rows = []
    for name in sorted(diagnostics or {}):
        d = diagnostics[name]
        for f, (p, v) in enumerate(zip(d.pvalues, d.variances)):
            diag_rows.append([name, f, _num(p), _num(v), _num(d.min_ks_pvalue),
                              _num(d.max_variance), _num(d.normalized)])
    write("diagnostics.csv", ("dataset", "feature", "ks_pvalue", "variance", "min_ks_pvalue",
                              "max_variance", "normalized"), diag_rows)
    return paths


def read_records(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

_KEYS = {
    "dataset.sources": "datasets",
    "dataset.label_column": "label_column",
    "dataset.class_rule": "class_rule",
    "dataset.n_components": "n_components",
    "dataset.toy_normal": "toy_normal",
    "dataset.toy_anomaly": "toy_anomaly",
    "split.policy": "split_policy",
    "run.seed": "seed",
    "run.n_jobs": "n_jobs",
    "run.output_dir": "output_dir",
    "run.gram_cache": "gram_cache",
    "feature_map.angle_scale": "angle_scale",
    "feature_map.entangler": "entangler",
    "baseline.rbf_gamma": "rbf_gamma",
    "noise.kinds": "noise_kinds",
    "noise.strengths": "noise_strengths",
    "noise.miscalibration_steps": "miscalibration_steps",
    "noise.miscalibration_axis": "miscalibration_axis",
    "noise.densify_pi": "densify_pi",
    "attack.epsilons": "epsilons",
    "attack.iterations": "attack_iterations",
    "attack.h": "attack_h",
    "attack.noisy": "attack_noisy",
    "attack.retrain": "retrain",
}
_SVR_KEYS = {"svr.C": "C", "svr.tube_epsilon": "tube_epsilon",
             "svr.kkt_tolerance": "kkt_tolerance", "svr.max_iterations": "max_iterations"}


def parse_entangler(text: str):
    text = text.strip()
    if text in ("", "ring"):
        return None
    return tuple(tuple(int(q) for q in pair.split("-")) for pair in text.split(","))


def _coerce(attr: str, raw: str):
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    t = str(kinds[attr])
    raw = raw.strip()
    if attr == "entangler":
        return parse_entangler(raw)
    if attr == "datasets" or attr == "noise_kinds":
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    if attr in ("noise_strengths", "epsilons"):
        return tuple(float(s) for s in raw.split(",") if s.strip())
    if attr == "angle_scale":
        return float(eval_angle(raw))
    if t.startswith("bool"):
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{attr}: expected a boolean, got {raw!r}")
        return raw.lower() in ("true", "1", "yes")
    if t.startswith("int"):
        return int(raw)
    if t.startswith("float"):
        return float(raw)
    if attr in ("class_rule", "gram_cache"):
        return raw or None
    return raw


def eval_angle(text: str) -> float:
    """Parse ``pi``, ``2pi``, ``pi/2``, ``0.5*pi`` or a plain number."""
    t = text.replace(" ", "").lower().replace("*", "")
    if "pi" not in t:
        return float(t)
    head, _, tail = t.partition("pi")
    coef = float(head) if head else 1.0
    if tail.startswith("/"):
        coef /= float(tail[1:])
    elif tail:
        raise ValueError(f"cannot parse angle {text!r}")
    return coef * np.pi


def load_config(path) -> ExperimentConfig:
    """Read a flat ``section.key = value`` file (``#`` starts a comment)."""
    values, svr = {}, {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"{path}:{n}: expected key = value")
        if key in _SVR_KEYS:
            attr = _SVR_KEYS[key]
            svr[attr] = int(value) if attr == "max_iterations" else float(value)
        elif key in _KEYS:
            values[_KEYS[key]] = _coerce(_KEYS[key], value)
        else:
            raise ValueError(f"{path}:{n}: unknown key {key!r}")
    if svr:
        values["svr"] = SvrConfig(**svr)
    return ExperimentConfig(**values)
