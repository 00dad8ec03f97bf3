"""Exact state-vector and density-matrix simulation of small qubit circuits.

Only the gate set needed by the kernel circuit is supported: single-qubit
``RZ``/``RX``/``RY`` rotations and the two-qubit ``IsingZZ`` interaction.
Qubit 0 is the most significant bit of a basis-state index, i.e. the
left-most factor of a Kronecker product.

Rotations follow ``R_a(t) = exp(-i t sigma_a / 2)`` and
``IsingZZ(t) = exp(-i t Z (x) Z / 2)``.

Noise is described by single-qubit Kraus channels.  Incoherent channels are
applied after every gate to each qubit the gate touches; the coherent
miscalibration channel is realised as an overrotation ``R_a(t) -> R_a(t + p)``
of every rotation gate (``IsingZZ`` included).

Internally every routine works on a leading batch axis so that whole data
sets can be pushed through a circuit in one pass; gate angles may therefore
be arrays of shape ``(batch,)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

STATE_ATOL = 1e-10
PSD_ATOL = 1e-9

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_PAULI = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}

ROTATION_KINDS = {"RX": "x", "RY": "y", "RZ": "z"}
GATE_KINDS = frozenset(ROTATION_KINDS) | {"IsingZZ"}

CHANNEL_KINDS = (
    "amplitude_damping",
    "bitflip",
    "depolarizing",
    "miscalibration",
    "phase_damping",
    "phaseflip",
)
INCOHERENT_KINDS = tuple(k for k in CHANNEL_KINDS if k != "miscalibration")

Angle = Union[float, np.ndarray]


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------


def _n_qubits_for(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if n < 1 or 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two >= 2")
    return n


@dataclass(frozen=True)
class StateVector:
    """Normalised pure state of ``n_qubits`` qubits."""

    amplitudes: np.ndarray
    n_qubits: int = field(init=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        object.__setattr__(self, "n_qubits", _n_qubits_for(amps.size))
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > STATE_ATOL:
            raise ValueError(f"state vector norm^2 is {norm!r}, expected 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """Mixed state: Hermitian, unit trace, positive semidefinite."""

    matrix: np.ndarray
    n_qubits: int = field(init=False)

    def __post_init__(self):
        rho = np.array(self.matrix, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {rho.shape}")
        object.__setattr__(self, "n_qubits", _n_qubits_for(rho.shape[0]))
        if not np.allclose(rho, rho.conj().T, rtol=0.0, atol=STATE_ATOL):
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(rho)
        if abs(tr - 1.0) > STATE_ATOL:
            raise ValueError(f"density matrix trace is {tr!r}, expected 1")
        lam_min = float(np.linalg.eigvalsh(rho).min())
        if lam_min < -PSD_ATOL:
            raise ValueError(f"density matrix has negative eigenvalue {lam_min:.3e}")
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)

    @classmethod
    def zero(cls, n_qubits: int) -> "DensityMatrix":
        rho = np.zeros((2**n_qubits, 2**n_qubits), dtype=complex)
        rho[0, 0] = 1.0
        return cls(rho)

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        d = 2**n_qubits
        return cls(np.eye(d, dtype=complex) / d)

    def probabilities(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


# ---------------------------------------------------------------------------
# Gates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Gate:
    """A rotation or IsingZZ gate.

    ``angle`` is either a float or an array of per-sample angles, in which
    case the gate describes a batch of circuits sharing one structure.
    """

    kind: str
    qubits: tuple
    angle: Angle = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        qubits = tuple(int(q) for q in self.qubits)
        arity = 2 if self.kind == "IsingZZ" else 1
        if len(qubits) != arity:
            raise ValueError(f"{self.kind} acts on {arity} qubit(s), got {qubits}")
        if any(q < 0 for q in qubits):
            raise ValueError(f"negative qubit index in {qubits}")
        if arity == 2 and qubits[0] == qubits[1]:
            raise ValueError(f"IsingZZ needs two distinct qubits, got {qubits}")
        object.__setattr__(self, "qubits", qubits)

    def adjoint(self) -> "Gate":
        return Gate(self.kind, self.qubits, -self.angle)

    def shifted(self, offset: float) -> "Gate":
        return Gate(self.kind, self.qubits, self.angle + offset)

    def matrix(self) -> np.ndarray:
        """Dense unitary (``2x2`` or ``4x4``), batched when the angle is."""
        if self.kind == "IsingZZ":
            theta = np.asarray(self.angle, dtype=float)
            zz = np.array([1.0, -1.0, -1.0, 1.0])
            phases = np.exp(-0.5j * theta[..., None] * zz)
            return phases[..., :, None] * np.eye(4)
        return rotation(ROTATION_KINDS[self.kind], self.angle)


def rotation(axis: str, angle: Angle) -> np.ndarray:
    """``exp(-i angle sigma_axis / 2)``; shape ``(2, 2)`` or ``(B, 2, 2)``."""
    sigma = _PAULI[axis.lower()]
    theta = np.asarray(angle, dtype=float)
    c = np.cos(theta / 2)[..., None, None]
    s = np.sin(theta / 2)[..., None, None]
    return c * I2 - 1j * s * sigma


def _check_qubits(gate: Gate, n_qubits: int) -> None:
    if max(gate.qubits) >= n_qubits:
        raise IndexError(f"{gate.kind} on qubits {gate.qubits} exceeds {n_qubits}-qubit register")


# ---------------------------------------------------------------------------
# Kraus channels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KrausChannel:
    """Single-qubit channel in operator-sum form."""

    kind: str
    strength: float
    elements: tuple
    rotation_axis: str | None = None

    def __post_init__(self):
        elements = tuple(np.asarray(e, dtype=complex) for e in self.elements)
        for e in elements:
            e.setflags(write=False)
        object.__setattr__(self, "elements", elements)

    @property
    def is_coherent(self) -> bool:
        return self.kind == "miscalibration"

    def adjoint_elements(self) -> tuple:
        return tuple(e.conj().T for e in self.elements)


def _check_probability(kind: str, p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{kind} strength must lie in [0, 1], got {p}")
    return p


def phase_damping_to_flip_prob(lam: float) -> float:
    """Phase-flip probability equivalent to phase damping ``lam``."""
    lam = _check_probability("phase_damping", lam)
    return (1.0 - np.sqrt(1.0 - lam)) / 2.0


def make_channel(kind: str, strength: float, rotation_axis: str | None = None) -> KrausChannel:
    """Build one of the six supported noise channels.

    Parameters
    ----------
    kind : str
        One of :data:`CHANNEL_KINDS`.
    strength : float
        Probability (or damping) in ``[0, 1]`` for the incoherent channels;
        overrotation in radians for ``"miscalibration"``.
    rotation_axis : str, optional
        Axis of the overrotation element (``"x"``, ``"y"`` or ``"z"``), used by
        ``"miscalibration"`` only.  Defaults to ``"x"``.
    """
    if kind not in CHANNEL_KINDS:
        raise ValueError(f"unknown channel kind {kind!r}; expected one of {CHANNEL_KINDS}")
    if kind == "miscalibration":
        p = float(strength)
        if not np.isfinite(p):
            raise ValueError(f"miscalibration overrotation must be finite, got {strength}")
        axis = (rotation_axis or "x").lower()
        if axis not in _PAULI:
            raise ValueError(f"rotation axis must be x, y or z, got {rotation_axis!r}")
        return KrausChannel(kind, p, (rotation(axis, p),), axis)
    if rotation_axis is not None:
        raise ValueError(f"rotation_axis only applies to miscalibration, not {kind}")

    p = _check_probability(kind, strength)
    if kind == "amplitude_damping":
        elements = (
            np.array([[1, 0], [0, np.sqrt(1 - p)]]),
            np.array([[0, np.sqrt(p)], [0, 0]]),
        )
    elif kind == "bitflip":
        elements = (np.sqrt(1 - p) * I2, np.sqrt(p) * PAULI_X)
    elif kind == "phaseflip":
        elements = (np.sqrt(1 - p) * I2, np.sqrt(p) * PAULI_Z)
    elif kind == "depolarizing":
        w = np.sqrt(p / 3)
        elements = (np.sqrt(1 - p) * I2, w * PAULI_X, w * PAULI_Y, w * PAULI_Z)
    else:  # phase_damping
        elements = (
            np.array([[1, 0], [0, np.sqrt(1 - p)]]),
            np.array([[0, 0], [0, np.sqrt(p)]]),
        )
    return KrausChannel(kind, p, elements)


def validate_channel(channel: KrausChannel | Sequence[np.ndarray]) -> tuple[bool, float]:
    """Check the completeness relation ``sum_i E_i^dag E_i = I``.

    Returns ``(valid, residual)`` where ``residual`` is the largest absolute
    entry of ``sum_i E_i^dag E_i - I``.
    """
    elements = channel.elements if isinstance(channel, KrausChannel) else tuple(channel)
    if not elements:
        raise ValueError("channel has no operation elements")
    mats = [np.asarray(e, dtype=complex) for e in elements]
    d = mats[0].shape[0]
    for m in mats:
        if m.ndim != 2 or m.shape != (d, d):
            raise ValueError(f"operation elements must all be {d}x{d}, got {m.shape}")
    total = sum(m.conj().T @ m for m in mats)
    residual = float(np.max(np.abs(total - np.eye(d))))
    return residual <= STATE_ATOL, residual


@dataclass(frozen=True)
class NoiseModel:
    """Optional channel plus its placement in the circuit.

    ``placement="after_gate"`` applies an incoherent channel to every qubit a
    gate acts on, right after the gate.  Coherent channels always use the
    overrotation placement.
    """

    channel: KrausChannel | None = None
    placement: str = "after_gate"

    def __post_init__(self):
        if self.placement != "after_gate":
            raise ValueError(f"unsupported placement policy {self.placement!r}")
        if self.channel is not None:
            ok, residual = validate_channel(self.channel)
            if not ok:
                raise ValueError(f"channel violates completeness (residual {residual:.2e})")

    @classmethod
    def of(cls, kind: str | None, strength: float = 0.0, **kwargs) -> "NoiseModel":
        if kind is None or kind == "none":
            return cls()
        return cls(make_channel(kind, strength, **kwargs))

    @property
    def is_ideal(self) -> bool:
        return self.channel is None

    @property
    def is_unitary(self) -> bool:
        return self.channel is None or self.channel.is_coherent

    @property
    def kind(self) -> str:
        return "none" if self.channel is None else self.channel.kind

    @property
    def strength(self) -> float:
        return 0.0 if self.channel is None else self.channel.strength


IDEAL = NoiseModel()


# ---------------------------------------------------------------------------
# Batched array kernels
# ---------------------------------------------------------------------------


def _left_1q(arr: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    """Multiply the row index of ``arr`` (shape ``(B, 2**n, M)``) by ``u`` on qubit ``q``."""
    b, d, m = arr.shape
    view = arr.reshape(b, 2**q, 2, 2 ** (n - q - 1), m)
    if u.ndim == 2:
        out = np.einsum("ij,bajcm->baicm", u, view)
    else:
        out = np.einsum("bij,bajcm->baicm", u, view)
    return out.reshape(b, d, m)


def _conj_t(arr: np.ndarray) -> np.ndarray:
    return arr.conj().swapaxes(-1, -2)


def _sandwich_1q(rho: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    """``u rho u^dag`` with ``u`` embedded on qubit ``q``."""
    left = _left_1q(rho, u, q, n)
    return _conj_t(_left_1q(_conj_t(left), u, q, n))


def _zz_phases(theta: np.ndarray, a: int, b: int, n: int) -> np.ndarray:
    idx = np.arange(2**n)
    za = 1 - 2 * ((idx >> (n - 1 - a)) & 1)
    zb = 1 - 2 * ((idx >> (n - 1 - b)) & 1)
    return np.exp(-0.5j * np.asarray(theta, dtype=float)[..., None] * (za * zb))


def _broadcast_angle(angle: Angle, batch: int) -> np.ndarray | float:
    a = np.asarray(angle, dtype=float)
    if a.ndim == 0:
        return float(a)
    if a.shape != (batch,):
        raise ValueError(f"batched angle has shape {a.shape}, expected ({batch},)")
    return a


def _gate_on_pure(psi: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    batch = psi.shape[0]
    angle = _broadcast_angle(gate.angle, batch)
    if gate.kind == "IsingZZ":
        ph = _zz_phases(angle, gate.qubits[0], gate.qubits[1], n)
        return psi * (ph[..., None] if np.ndim(angle) else ph[None, :, None])
    return _left_1q(psi, rotation(ROTATION_KINDS[gate.kind], angle), gate.qubits[0], n)


def _gate_on_mixed(rho: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    batch = rho.shape[0]
    angle = _broadcast_angle(gate.angle, batch)
    if gate.kind == "IsingZZ":
        ph = _zz_phases(angle, gate.qubits[0], gate.qubits[1], n)
        if not np.ndim(angle):
            ph = ph[None, :]
        return rho * ph[:, :, None] * ph.conj()[:, None, :]
    return _sandwich_1q(rho, rotation(ROTATION_KINDS[gate.kind], angle), gate.qubits[0], n)


def _kraus_on_mixed(rho: np.ndarray, elements: Iterable[np.ndarray], q: int, n: int) -> np.ndarray:
    out = np.zeros_like(rho)
    for e in elements:
        out += _sandwich_1q(rho, e, q, n)
    return out


def schedule(gates: Sequence[Gate], noise_model: NoiseModel | None = None) -> Iterator[tuple]:
    """Yield the noisy instruction stream for ``gates``.

    Items are ``("gate", Gate)`` or ``("kraus", elements, qubit)``.
    """
    nm = noise_model or IDEAL
    channel = nm.channel
    for gate in gates:
        if channel is not None and channel.is_coherent:
            gate = gate.shifted(channel.strength)
        yield ("gate", gate)
        if channel is not None and not channel.is_coherent:
            for q in gate.qubits:
                yield ("kraus", channel.elements, q)


def _batch_size(gates: Sequence[Gate]) -> int:
    sizes = {np.size(g.angle) for g in gates if np.ndim(g.angle) > 0}
    if len(sizes) > 1:
        raise ValueError(f"inconsistent batch sizes among gate angles: {sorted(sizes)}")
    return sizes.pop() if sizes else 1


def evolve_pure(gates: Sequence[Gate], n_qubits: int, noise_model: NoiseModel | None = None,
                batch: int | None = None) -> np.ndarray:
    """Batched pure-state evolution of ``|0...0>``; returns shape ``(B, 2**n)``.

    Only valid for unitary noise models (ideal or miscalibration).
    """
    nm = noise_model or IDEAL
    if not nm.is_unitary:
        raise ValueError(f"{nm.kind} noise cannot be simulated with pure states")
    batch = batch or _batch_size(gates)
    psi = np.zeros((batch, 2**n_qubits, 1), dtype=complex)
    psi[:, 0, 0] = 1.0
    for _, gate in schedule(gates, nm):
        _check_qubits(gate, n_qubits)
        psi = _gate_on_pure(psi, gate, n_qubits)
    return psi[..., 0]


def evolve_mixed(gates: Sequence[Gate], n_qubits: int, noise_model: NoiseModel | None = None,
                 initial: np.ndarray | None = None, batch: int | None = None,
                 adjoint: bool = False) -> np.ndarray:
    """Batched density-matrix evolution; returns shape ``(B, 2**n, 2**n)``.

    With ``adjoint=True`` the Heisenberg-picture dual of the noisy circuit is
    applied to ``initial`` instead: instructions run in reverse order with
    every gate and Kraus element replaced by its adjoint.  Then
    ``tr(A Phi(rho)) == tr(Phi^dag(A) rho)`` for the forward map ``Phi``.
    """
    batch = batch or _batch_size(gates)
    d = 2**n_qubits
    if initial is None:
        rho = np.zeros((batch, d, d), dtype=complex)
        rho[:, 0, 0] = 1.0
    else:
        rho = np.broadcast_to(np.asarray(initial, dtype=complex), (batch, d, d)).copy()
    ops = list(schedule(gates, noise_model))
    if adjoint:
        ops = ops[::-1]
    for op in ops:
        if op[0] == "gate":
            gate = op[1]
            _check_qubits(gate, n_qubits)
            rho = _gate_on_mixed(rho, gate.adjoint() if adjoint else gate, n_qubits)
        else:
            _, elements, q = op
            if adjoint:
                elements = tuple(e.conj().T for e in elements)
            rho = _kraus_on_mixed(rho, elements, q, n_qubits)
    return rho


# ---------------------------------------------------------------------------
# Public single-circuit API
# ---------------------------------------------------------------------------


def apply_gate(state: StateVector | DensityMatrix, gate: Gate) -> StateVector | DensityMatrix:
    """Apply one gate; angles must be scalar here."""
    if np.ndim(gate.angle) != 0:
        raise ValueError("apply_gate takes a scalar-angle gate")
    _check_qubits(gate, state.n_qubits)
    n = state.n_qubits
    if isinstance(state, StateVector):
        psi = _gate_on_pure(state.amplitudes[None, :, None], gate, n)
        return StateVector(psi[0, :, 0])
    rho = _gate_on_mixed(state.matrix[None], gate, n)
    return DensityMatrix(rho[0])


def apply_channel(rho: DensityMatrix, channel: KrausChannel, qubit: int) -> DensityMatrix:
    """``sum_i E_i rho E_i^dag`` with each element embedded on ``qubit``."""
    ok, residual = validate_channel(channel)
    if not ok:
        raise ValueError(f"invalid channel {channel.kind}: completeness residual {residual:.2e}")
    if channel.elements[0].shape != (2, 2):
        raise ValueError("only single-qubit channels are supported")
    if not 0 <= qubit < rho.n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {rho.n_qubits} qubits")
    out = _kraus_on_mixed(rho.matrix[None], channel.elements, qubit, rho.n_qubits)[0]
    # symmetrise away rounding so the Hermiticity check is about physics, not ulps
    return DensityMatrix(0.5 * (out + out.conj().T))


def run_circuit(gates: Sequence[Gate], n_qubits: int,
                noise_model: NoiseModel | None = None) -> StateVector | DensityMatrix:
    """Run ``gates`` on ``|0...0>``.

    Returns a :class:`StateVector` for ideal runs and a
    :class:`DensityMatrix` whenever a noise channel is present.
    """
    nm = noise_model or IDEAL
    for g in gates:
        if np.ndim(g.angle) != 0:
            raise ValueError("run_circuit takes scalar-angle gates; use evolve_* for batches")
        _check_qubits(g, n_qubits)
    if nm.is_ideal:
        return StateVector(evolve_pure(gates, n_qubits, nm, batch=1)[0])
    rho = evolve_mixed(gates, n_qubits, nm, batch=1)[0]
    return DensityMatrix(0.5 * (rho + rho.conj().T))


def all_zero_probability(state: StateVector | DensityMatrix) -> float:
    """Probability of measuring every qubit in ``|0>``."""
    if isinstance(state, StateVector):
        return float(abs(state.amplitudes[0]) ** 2)
    return float(state.matrix[0, 0].real)
