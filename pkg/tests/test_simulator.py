import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_channel, dense_rotation, dense_zz, kraus_elements, random_density, run_dense
from qsvr.simulator import (CHANNEL_KINDS, IDEAL, INCOHERENT_KINDS, DensityMatrix, Gate,
                            KrausChannel, NoiseModel, StateVector, all_zero_probability,
                            apply_channel, apply_gate, evolve_mixed, evolve_pure, make_channel,
                            phase_damping_to_flip_prob, run_circuit, validate_channel)

ATOL = 1e-10

unit = st.floats(0.0, 1.0, allow_nan=False)
angle = st.floats(-10.0, 10.0, allow_nan=False)
seeds = st.integers(0, 2**32 - 1)


def rho_with(offdiag=0.5):
    return DensityMatrix(np.array([[0.5, offdiag], [offdiag, 0.5]]))


# --- channels ---------------------------------------------------------------


def test_bitflip_zero_is_identity():
    rho = DensityMatrix(random_density(np.random.default_rng(0), 1))
    out = apply_channel(rho, make_channel("bitflip", 0.0), 0)
    np.testing.assert_allclose(out.matrix, rho.matrix, atol=ATOL)


def test_amplitude_damping_full_decay():
    one = DensityMatrix(np.diag([0.0, 1.0]))
    out = apply_channel(one, make_channel("amplitude_damping", 1.0), 0)
    np.testing.assert_allclose(out.matrix, np.diag([1.0, 0.0]), atol=ATOL)


def test_amplitude_damping_half():
    one = DensityMatrix(np.diag([0.0, 1.0]))
    out = apply_channel(one, make_channel("amplitude_damping", 0.5), 0)
    np.testing.assert_allclose(out.matrix, np.diag([0.5, 0.5]), atol=ATOL)


def test_phaseflip_shrinks_coherence():
    out = apply_channel(rho_with(0.5), make_channel("phaseflip", 0.25), 0)
    assert out.matrix[0, 1] == pytest.approx(0.25, abs=ATOL)
    assert out.matrix[1, 0] == pytest.approx(0.25, abs=ATOL)


def test_depolarizing_fixed_point():
    mixed = DensityMatrix.maximally_mixed(1)
    out = apply_channel(mixed, make_channel("depolarizing", 0.37), 0)
    np.testing.assert_allclose(out.matrix, np.eye(2) / 2, atol=ATOL)


def test_identity_channel_leaves_state():
    rho = DensityMatrix(random_density(np.random.default_rng(1), 2))
    identity = KrausChannel("bitflip", 0.0, (np.eye(2),))
    np.testing.assert_allclose(apply_channel(rho, identity, 1).matrix, rho.matrix, atol=ATOL)


def test_validate_channel_cases():
    assert validate_channel(make_channel("depolarizing", 0.3))[0]
    assert validate_channel(make_channel("miscalibration", 1.7))[0]
    ok, residual = validate_channel([np.eye(2), np.eye(2)])
    assert not ok
    assert residual == pytest.approx(1.0)


def test_validate_channel_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        validate_channel([np.eye(2), np.eye(4)])
    with pytest.raises(ValueError):
        validate_channel([])


def test_apply_channel_rejects_incomplete_channel():
    bad = KrausChannel("bitflip", 0.5, (np.eye(2), np.eye(2)))
    with pytest.raises(ValueError):
        apply_channel(DensityMatrix.zero(1), bad, 0)


@pytest.mark.parametrize("kind", ["bitflip", "amplitude_damping", "depolarizing"])
def test_strength_out_of_range(kind):
    with pytest.raises(ValueError):
        make_channel(kind, 1.5)
    with pytest.raises(ValueError):
        make_channel(kind, -0.1)


def test_unknown_channel():
    with pytest.raises(ValueError):
        make_channel("erasure", 0.1)


def test_phase_damping_flip_probability():
    assert phase_damping_to_flip_prob(0.0) == 0.0
    assert phase_damping_to_flip_prob(1.0) == pytest.approx(0.5)
    assert phase_damping_to_flip_prob(0.75) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        phase_damping_to_flip_prob(1.2)


@pytest.mark.parametrize("kind", INCOHERENT_KINDS)
def test_elements_match_reference(kind):
    ch = make_channel(kind, 0.3)
    ref = kraus_elements(kind, 0.3)
    assert len(ch.elements) == len(ref)
    for a, b in zip(ch.elements, ref):
        np.testing.assert_allclose(a, b, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(kind=st.sampled_from(CHANNEL_KINDS), p=unit)
def test_completeness_every_channel(kind, p):
    strength = 2 * np.pi * p if kind == "miscalibration" else p
    ok, residual = validate_channel(make_channel(kind, strength))
    assert ok and residual < ATOL


@settings(max_examples=50, deadline=None)
@given(kind=st.sampled_from(CHANNEL_KINDS), p=unit, seed=seeds, qubit=st.integers(0, 1))
def test_channel_preserves_trace_and_hermiticity(kind, p, seed, qubit):
    rho = DensityMatrix(random_density(np.random.default_rng(seed), 2))
    strength = 2 * np.pi * p if kind == "miscalibration" else p
    out = apply_channel(rho, make_channel(kind, strength), qubit).matrix
    assert abs(np.trace(out) - 1) < ATOL
    np.testing.assert_allclose(out, out.conj().T, atol=ATOL)


@settings(max_examples=50, deadline=None)
@given(kind=st.sampled_from(CHANNEL_KINDS), p=unit, seed=seeds, qubit=st.integers(0, 2))
def test_channel_matches_dense_kraus_sum(kind, p, seed, qubit):
    rho = random_density(np.random.default_rng(seed), 3)
    strength = 2 * np.pi * p if kind == "miscalibration" else p
    out = apply_channel(DensityMatrix(rho), make_channel(kind, strength), qubit).matrix
    ref = dense_channel(rho, kraus_elements(kind, strength), qubit, 3)
    np.testing.assert_allclose(out, ref, atol=ATOL)


@settings(max_examples=100, deadline=None)
@given(lam=unit, seed=seeds)
def test_phase_damping_equals_phase_flip(lam, seed):
    rho = DensityMatrix(random_density(np.random.default_rng(seed), 1))
    damped = apply_channel(rho, make_channel("phase_damping", lam), 0)
    flipped = apply_channel(rho, make_channel("phaseflip", phase_damping_to_flip_prob(lam)), 0)
    np.testing.assert_allclose(damped.matrix, flipped.matrix, atol=ATOL)


@settings(max_examples=30, deadline=None)
@given(seed=seeds)
def test_full_amplitude_damping_resets(seed):
    rho = DensityMatrix(random_density(np.random.default_rng(seed), 1))
    out = apply_channel(rho, make_channel("amplitude_damping", 1.0), 0)
    np.testing.assert_allclose(out.matrix, np.diag([1.0, 0.0]), atol=ATOL)


@settings(max_examples=30, deadline=None)
@given(p=angle, seed=seeds, axis=st.sampled_from("xyz"))
def test_miscalibration_is_2pi_periodic(p, seed, axis):
    rho = DensityMatrix(random_density(np.random.default_rng(seed), 1))
    a = apply_channel(rho, make_channel("miscalibration", p, axis), 0)
    b = apply_channel(rho, make_channel("miscalibration", p + 2 * np.pi, axis), 0)
    np.testing.assert_allclose(a.matrix, b.matrix, atol=ATOL)


def test_rotation_axis_only_for_miscalibration():
    with pytest.raises(ValueError):
        make_channel("bitflip", 0.1, "x")
    with pytest.raises(ValueError):
        make_channel("miscalibration", 0.1, "w")


# --- states and gates -------------------------------------------------------


def test_state_validation():
    with pytest.raises(ValueError):
        StateVector(np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        StateVector(np.ones(3) / np.sqrt(3))
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([0.7, 0.7]))
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        DensityMatrix(np.array([[0.5, 0.5], [0.1, 0.5]]))


def test_gate_validation():
    with pytest.raises(ValueError):
        Gate("CNOT", (0, 1))
    with pytest.raises(ValueError):
        Gate("IsingZZ", (1, 1), 0.3)
    with pytest.raises(ValueError):
        Gate("RX", (0, 1), 0.3)


def test_rx_pi_flips():
    out = apply_gate(StateVector.zero(1), Gate("RX", (0,), np.pi))
    np.testing.assert_allclose(out.probabilities(), [0.0, 1.0], atol=ATOL)


def test_rz_keeps_probabilities():
    plus = StateVector(np.array([1, 1]) / np.sqrt(2))
    out = apply_gate(plus, Gate("RZ", (0,), 1.234))
    np.testing.assert_allclose(out.probabilities(), [0.5, 0.5], atol=ATOL)


def test_zz_is_phase_only():
    basis = StateVector(np.eye(4)[2])
    out = apply_gate(basis, Gate("IsingZZ", (0, 1), 0.77))
    np.testing.assert_allclose(out.probabilities(), np.eye(4)[2], atol=ATOL)
    zero = apply_gate(StateVector.zero(2), Gate("IsingZZ", (0, 1), 0.77))
    assert all_zero_probability(zero) == pytest.approx(1.0)


def test_gate_out_of_range():
    with pytest.raises(IndexError):
        apply_gate(StateVector.zero(2), Gate("RX", (2,), 0.1))
    with pytest.raises(IndexError):
        apply_channel(DensityMatrix.zero(2), make_channel("bitflip", 0.1), 3)


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(["RX", "RY", "RZ", "IsingZZ"]), theta=angle, seed=seeds)
def test_gate_matches_dense_unitary(kind, theta, seed):
    rng = np.random.default_rng(seed)
    n = 3
    qubits = tuple(rng.choice(n, size=2 if kind == "IsingZZ" else 1, replace=False))
    if kind == "IsingZZ":
        U = dense_zz(theta, *qubits, n)
    else:
        U = dense_rotation(kind[1].lower(), theta, qubits[0], n)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    out = apply_gate(StateVector(psi), Gate(kind, qubits, theta))
    np.testing.assert_allclose(out.amplitudes, U @ psi, atol=ATOL)
    rho = np.outer(psi, psi.conj())
    out_rho = apply_gate(DensityMatrix(rho), Gate(kind, qubits, theta))
    np.testing.assert_allclose(out_rho.matrix, U @ rho @ U.conj().T, atol=ATOL)


def test_gate_matrix_matches_dense():
    np.testing.assert_allclose(Gate("RY", (0,), 0.4).matrix(), dense_rotation("y", 0.4, 0, 1), atol=ATOL)
    np.testing.assert_allclose(Gate("IsingZZ", (0, 1), 0.4).matrix(), dense_zz(0.4, 0, 1, 2), atol=ATOL)


# --- circuits ---------------------------------------------------------------


def test_empty_circuit():
    state = run_circuit([], 3)
    assert isinstance(state, StateVector)
    assert all_zero_probability(state) == 1.0


def test_rx_pi_circuit():
    assert all_zero_probability(run_circuit([Gate("RX", (0,), np.pi)], 2)) == pytest.approx(0.0, abs=ATOL)


def test_all_zero_probability_cases():
    uniform = StateVector(np.ones(8) / np.sqrt(8))
    assert all_zero_probability(uniform) == pytest.approx(1 / 8)
    assert all_zero_probability(DensityMatrix.maximally_mixed(3)) == pytest.approx(1 / 8)


def test_depolarized_two_qubit_circuit_matches_dense():
    gates = [Gate("RZ", (0,), 0.3), Gate("RX", (1,), 1.1), Gate("IsingZZ", (0, 1), 0.8)]
    ops = [("z", (0,), 0.3), ("x", (1,), 1.1), ("zz", (0, 1), 0.8)]
    out = run_circuit(gates, 2, NoiseModel.of("depolarizing", 0.5))
    np.testing.assert_allclose(out.matrix, run_dense(ops, 2, "depolarizing", 0.5), atol=ATOL)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, n=st.integers(1, 3))
def test_pure_and_mixed_paths_agree(seed, n):
    rng = np.random.default_rng(seed)
    gates = []
    for _ in range(6):
        if n > 1 and rng.random() < 0.3:
            a, b = rng.choice(n, 2, replace=False)
            gates.append(Gate("IsingZZ", (a, b), rng.uniform(-4, 4)))
        else:
            gates.append(Gate(rng.choice(["RX", "RY", "RZ"]), (rng.integers(n),), rng.uniform(-4, 4)))
    psi = run_circuit(gates, n).amplitudes
    rho = evolve_mixed(gates, n, IDEAL, batch=1)[0]
    np.testing.assert_allclose(rho, np.outer(psi, psi.conj()), atol=ATOL)


def test_noisy_run_returns_density_matrix():
    out = run_circuit([Gate("RX", (0,), 0.5)], 1, NoiseModel.of("bitflip", 0.1))
    assert isinstance(out, DensityMatrix)
    assert out.purity() < 1


def test_pure_evolution_rejects_incoherent_noise():
    with pytest.raises(ValueError):
        evolve_pure([Gate("RX", (0,), 0.5)], 1, NoiseModel.of("bitflip", 0.1))


def test_batched_angles_match_single_runs():
    thetas = np.array([0.1, 0.7, 2.5])
    gates = [Gate("RX", (0,), thetas), Gate("IsingZZ", (0, 1), 2 * thetas), Gate("RY", (1,), 0.3)]
    batch = evolve_mixed(gates, 2, NoiseModel.of("amplitude_damping", 0.2))
    for b, t in enumerate(thetas):
        single = [Gate("RX", (0,), t), Gate("IsingZZ", (0, 1), 2 * t), Gate("RY", (1,), 0.3)]
        ref = run_circuit(single, 2, NoiseModel.of("amplitude_damping", 0.2)).matrix
        np.testing.assert_allclose(batch[b], ref, atol=ATOL)


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(INCOHERENT_KINDS), p=unit, seed=seeds)
def test_heisenberg_dual_identity(kind, p, seed):
    rng = np.random.default_rng(seed)
    gates = [Gate("RX", (0,), rng.uniform(0, 3)), Gate("IsingZZ", (0, 1), rng.uniform(0, 3)),
             Gate("RZ", (1,), rng.uniform(0, 3))]
    nm = NoiseModel.of(kind, p)
    rho = random_density(rng, 2)
    A = random_density(rng, 2)
    fwd = evolve_mixed(gates, 2, nm, initial=rho, batch=1)[0]
    back = evolve_mixed(gates, 2, nm, initial=A, batch=1, adjoint=True)[0]
    assert np.trace(A @ fwd) == pytest.approx(np.trace(back @ rho), abs=ATOL)
