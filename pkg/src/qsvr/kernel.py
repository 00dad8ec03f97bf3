"""Fidelity kernel of the angle-encoding feature map, with optional noise.

The feature map on ``n`` qubits is a layer of ``RZ(s x_q)``, a layer of
``RX(s x_q)`` and an ``IsingZZ(s^2 x_a x_b)`` layer over the entangler
pairs, where ``s`` is :attr:`FeatureMapSpec.angle_scale`.  A kernel entry is
the all-zero probability after running ``U(x_j)`` followed by ``U(x_i)^dag``.

:func:`kernel_value` runs that inversion-test circuit literally.  :func:`gram`
uses the equivalent factorisation ``k_ij = tr(M_i rho_j)``, where ``rho_j``
is the (noisy) state prepared by ``U(x_j)`` and ``M_i`` is the all-zero
projector pulled back through the (noisy) inverse circuit of ``x_i``.  This
needs one simulation per sample instead of one per entry.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .simulator import (
    IDEAL,
    Gate,
    NoiseModel,
    all_zero_probability,
    evolve_mixed,
    evolve_pure,
    run_circuit,
)

log = logging.getLogger(__name__)

_CHUNK = 256


def ring_pairs(n: int) -> tuple:
    if n < 2:
        raise ValueError("entangling layer needs at least two qubits")
    if n == 2:
        return ((0, 1),)
    return tuple((q, (q + 1) % n) for q in range(n))


@dataclass(frozen=True)
class FeatureMapSpec:
    """Shape of the encoding circuit; one qubit per feature."""

    n_features: int
    angle_scale: float = np.pi
    entangler: tuple | None = None

    def __post_init__(self):
        n = int(self.n_features)
        if n < 2:
            raise ValueError(f"feature map needs n_features >= 2, got {n}")
        object.__setattr__(self, "n_features", n)
        object.__setattr__(self, "angle_scale", float(self.angle_scale))
        pairs = ring_pairs(n) if self.entangler is None else self.entangler
        pairs = tuple((int(a), int(b)) for a, b in pairs)
        for a, b in pairs:
            if a == b or not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"invalid entangler pair {(a, b)} for {n} qubits")
        object.__setattr__(self, "entangler", pairs)

    @property
    def n_qubits(self) -> int:
        return self.n_features

    def as_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "angle_scale": repr(self.angle_scale),
            "entangler": [list(p) for p in self.entangler],
        }


def config_hash(spec: FeatureMapSpec, noise_model: NoiseModel | None = None) -> str:
    """Stable digest of the feature map and the noise it was evaluated under."""
    nm = noise_model or IDEAL
    payload = spec.as_dict()
    payload["noise_kind"] = nm.kind
    payload["noise_strength"] = repr(float(nm.strength))
    if nm.channel is not None and nm.channel.rotation_axis is not None:
        payload["rotation_axis"] = nm.channel.rotation_axis
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _as_samples(x, spec: FeatureMapSpec, check_range: bool) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1] != spec.n_features:
        raise ValueError(f"expected {spec.n_features} features, got {arr.shape[-1]}")
    if check_range and arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("features must be normalised to [0, 1]")
    return arr


def build_feature_map(x, spec: FeatureMapSpec, check_range: bool = True) -> list[Gate]:
    """Gate list encoding ``x``.

    A 2-D ``x`` of shape ``(B, n_features)`` yields gates with batched
    angles, one circuit per row.
    """
    x = _as_samples(x, spec, check_range)
    s = spec.angle_scale
    xt = x.T if x.ndim == 2 else x
    gates = [Gate("RZ", (q,), s * xt[q]) for q in range(spec.n_features)]
    gates += [Gate("RX", (q,), s * xt[q]) for q in range(spec.n_features)]
    gates += [Gate("IsingZZ", (a, b), s * s * xt[a] * xt[b]) for a, b in spec.entangler]
    return gates


def inverse_circuit(gates: Sequence[Gate]) -> list[Gate]:
    return [g.adjoint() for g in reversed(gates)]


def kernel_value(x_i, x_j, spec: FeatureMapSpec, noise_model: NoiseModel | None = None) -> float:
    """Inversion-test kernel ``|<0| U(x_i)^dag U(x_j) |0>|^2`` under noise."""
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if x_i.ndim != 1 or x_j.ndim != 1:
        raise ValueError("kernel_value takes two 1-D feature vectors")
    gates = build_feature_map(x_j, spec) + inverse_circuit(build_feature_map(x_i, spec))
    return all_zero_probability(run_circuit(gates, spec.n_qubits, noise_model))


# ---------------------------------------------------------------------------
# Factorised batch evaluation
# ---------------------------------------------------------------------------


def _chunks(x: np.ndarray):
    for start in range(0, len(x), _CHUNK):
        yield x[start:start + _CHUNK]


def embed_states(x: np.ndarray, spec: FeatureMapSpec, noise_model: NoiseModel | None = None,
                 check_range: bool = True) -> np.ndarray:
    """States prepared by ``U(x)`` for every row of ``x``.

    Shape ``(B, 2**n)`` for unitary noise models, ``(B, 2**n, 2**n)``
    otherwise.
    """
    nm = noise_model or IDEAL
    x = np.atleast_2d(_as_samples(x, spec, check_range))
    out = []
    for part in _chunks(x):
        gates = build_feature_map(part, spec, check_range=False)
        if nm.is_unitary:
            out.append(evolve_pure(gates, spec.n_qubits, nm, batch=len(part)))
        else:
            out.append(evolve_mixed(gates, spec.n_qubits, nm, batch=len(part)))
    return np.concatenate(out) if out else _empty_states(spec, nm)


def embed_effects(x: np.ndarray, spec: FeatureMapSpec, noise_model: NoiseModel | None = None,
                  check_range: bool = True) -> np.ndarray:
    """Measurement effects pulled back through the inverse circuit of each row.

    For unitary models the effect is a rank-one projector ``|v><v|`` and the
    vector ``v`` is returned; otherwise the full Hermitian matrix.
    """
    nm = noise_model or IDEAL
    x = np.atleast_2d(_as_samples(x, spec, check_range))
    n = spec.n_qubits
    out = []
    for part in _chunks(x):
        inv = inverse_circuit(build_feature_map(part, spec, check_range=False))
        if nm.is_unitary:
            if nm.channel is not None:
                inv = [g.shifted(nm.channel.strength) for g in inv]
            # v = V^dag |0> where V is the executed inverse circuit
            out.append(evolve_pure(inverse_circuit(inv), n, IDEAL, batch=len(part)))
        else:
            zero = np.zeros((2**n, 2**n), dtype=complex)
            zero[0, 0] = 1.0
            out.append(evolve_mixed(inv, n, nm, initial=zero, batch=len(part), adjoint=True))
    return np.concatenate(out) if out else _empty_states(spec, nm)


def _empty_states(spec: FeatureMapSpec, nm: NoiseModel) -> np.ndarray:
    d = 2**spec.n_qubits
    return np.zeros((0, d) if nm.is_unitary else (0, d, d), dtype=complex)


def overlap_matrix(effects: np.ndarray, states: np.ndarray) -> np.ndarray:
    """``K[i, j] = tr(M_i rho_j)`` for the representations returned above.

    Uses plain ``einsum`` rather than BLAS so every entry is summed in the
    same order whatever the batch shapes, keeping scores bit-reproducible.
    """
    if states.ndim == 2:
        return np.abs(np.einsum("ik,jk->ij", effects.conj(), states)) ** 2
    b_e, b_s = len(effects), len(states)
    flat_e = effects.reshape(b_e, -1).conj()
    flat_s = states.reshape(b_s, -1)
    return np.real(np.einsum("ik,jk->ij", flat_e, flat_s))


# ---------------------------------------------------------------------------
# Gram matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GramMatrix:
    """Kernel values between two sample sets plus provenance."""

    values: np.ndarray
    row_samples: str = "rows"
    col_samples: str = "cols"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError(f"Gram values must be 2-D, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def spec_hash(self) -> str | None:
        return self.metadata.get("spec_hash")

    @property
    def T(self) -> "GramMatrix":
        return GramMatrix(self.values.T, self.col_samples, self.row_samples, dict(self.metadata))


def gram(rows, cols=None, spec: FeatureMapSpec | None = None,
         noise_model: NoiseModel | None = None, *, method: str = "factorized",
         row_samples: str = "rows", col_samples: str | None = None,
         seed: int | None = None, check_range: bool = True) -> GramMatrix:
    """Kernel matrix ``K[i, j] = kernel_value(rows[i], cols[j])``.

    With ``cols=None`` a self-Gram is built: only the upper triangle and
    diagonal are taken from the evaluation and mirrored, so the result is
    symmetric by construction even under noise.

    ``method="entrywise"`` runs every inversion-test circuit separately and
    is meant for cross-checking the default factorised route.
    """
    if spec is None:
        raise TypeError("gram() requires a FeatureMapSpec")
    nm = noise_model or IDEAL
    self_gram = cols is None
    rows = np.atleast_2d(_as_samples(rows, spec, check_range))
    cols_arr = rows if self_gram else np.atleast_2d(_as_samples(cols, spec, check_range))

    if method == "factorized":
        effects = embed_effects(rows, spec, nm, check_range=False)
        states = embed_states(cols_arr, spec, nm, check_range=False)
        k = overlap_matrix(effects, states)
        evaluations = len(rows) + len(cols_arr)
    elif method == "entrywise":
        k = np.zeros((len(rows), len(cols_arr)))
        evaluations = 0
        for i in range(len(rows)):
            for j in range(i if self_gram else 0, len(cols_arr)):
                k[i, j] = kernel_value(rows[i], cols_arr[j], spec, nm)
                evaluations += 1
    else:
        raise ValueError(f"unknown gram method {method!r}")

    if self_gram:
        k = np.triu(k) + np.triu(k, 1).T
    log.debug("gram %s x %s (%s, p=%s): %d circuit evaluations",
              k.shape[0], k.shape[1], nm.kind, nm.strength, evaluations)
    meta = {
        "spec_hash": config_hash(spec, nm),
        "noise_kind": nm.kind,
        "noise_strength": float(nm.strength),
        "evaluations": evaluations,
    }
    if seed is not None:
        meta["seed"] = int(seed)
    return GramMatrix(k, row_samples, row_samples if self_gram else (col_samples or "cols"), meta)


def kernel_class_stats(gram_matrix: GramMatrix | np.ndarray, labels) -> dict:
    """Mean and standard deviation of kernel values over the rows of each class.

    Returns ``{class_label: (mean, std)}`` ordered by class label.
    """
    values = gram_matrix.values if isinstance(gram_matrix, GramMatrix) else np.asarray(gram_matrix)
    labels = np.asarray(labels)
    if labels.shape != (values.shape[0],):
        raise ValueError(f"need one label per row ({values.shape[0]}), got {labels.shape}")
    stats = {}
    for cls in (0, 1):
        block = values[labels == cls]
        if block.size == 0:
            raise ValueError(f"class {cls} has no rows")
        stats[cls] = (float(block.mean()), float(block.std()))
    return stats


def format_class_stats(strength: float, auc: float, stats: dict) -> list[str]:
    """Render ``stats`` as ``strength, auc, class, mean +- std`` lines."""
    return [f"{strength:g} {auc:.2f} {cls} {mean:.3e} ± {std:.3e}"
            for cls, (mean, std) in stats.items()]


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_HEADER_KEYS = ("n_rows", "n_cols", "spec_hash", "noise_kind", "noise_strength")


class GramFormatError(ValueError):
    """A persisted Gram file could not be parsed."""


class GramVerificationError(ValueError):
    """A persisted Gram file belongs to a different configuration."""


def save_gram(gram_matrix: GramMatrix, path) -> Path:
    path = Path(path)
    meta = gram_matrix.metadata
    n_rows, n_cols = gram_matrix.shape
    header = {
        "n_rows": n_rows,
        "n_cols": n_cols,
        "spec_hash": meta.get("spec_hash", ""),
        "noise_kind": meta.get("noise_kind", "none"),
        "noise_strength": repr(float(meta.get("noise_strength", 0.0))),
        "row_samples": gram_matrix.row_samples,
        "col_samples": gram_matrix.col_samples,
    }
    if "seed" in meta:
        header["seed"] = meta["seed"]
    lines = [f"{k}={v}" for k, v in header.items()]
    lines += [" ".join(repr(float(v)) for v in row) for row in gram_matrix.values]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_gram(path, spec: FeatureMapSpec | None = None,
              noise_model: NoiseModel | None = None) -> GramMatrix:
    """Read a Gram file written by :func:`save_gram`.

    When ``spec`` is given the stored hash must match
    ``config_hash(spec, noise_model)``.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    header = {}
    body_start = 0
    for body_start, line in enumerate(lines):
        key, sep, value = line.partition("=")
        if not sep:
            break
        header[key.strip()] = value.strip()
    else:
        body_start = len(lines)
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise GramFormatError(f"{path}: missing header keys {missing}")
    try:
        n_rows, n_cols = int(header["n_rows"]), int(header["n_cols"])
        strength = float(header["noise_strength"])
    except ValueError as exc:
        raise GramFormatError(f"{path}: corrupt header ({exc})") from None
    body = [ln for ln in lines[body_start:] if ln.strip()]
    if len(body) != n_rows:
        raise GramFormatError(f"{path}: header says {n_rows} rows, found {len(body)}")
    try:
        values = np.array([[float(v) for v in ln.split()] for ln in body], dtype=float)
    except ValueError as exc:
        raise GramFormatError(f"{path}: non-numeric entry ({exc})") from None
    if n_rows and values.shape != (n_rows, n_cols):
        raise GramFormatError(f"{path}: expected {n_rows}x{n_cols} values, got ragged rows")
    values = values.reshape(n_rows, n_cols)

    if spec is not None:
        expected = config_hash(spec, noise_model)
        if header["spec_hash"] != expected:
            raise GramVerificationError(
                f"{path}: stored hash {header['spec_hash']} does not match configuration {expected}")
    meta = {"spec_hash": header["spec_hash"], "noise_kind": header["noise_kind"],
            "noise_strength": strength}
    if "seed" in header:
        meta["seed"] = int(header["seed"])
    return GramMatrix(values, header.get("row_samples", "rows"),
                      header.get("col_samples", "cols"), meta)
