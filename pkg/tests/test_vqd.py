import math

import numpy as np
import pytest

from qumvqd.core import fock
from qumvqd.core import fragments
from qumvqd.core import vqd
from qumvqd.core.fock import DenseHamiltonian, FockSpace, StateVector
from qumvqd.core.vqd import AnsatzSpec, DeflationState, OptimizerConfig

ENERGY_EPSILON = 1e-5
FAST = OptimizerConfig(restarts=2, max_evals=4000)


def diagonal_backend(values):
    space = FockSpace(1, len(values))
    hamiltonian = DenseHamiltonian(np.diag(values), tuple(range(len(values))), space=space)
    return vqd.DenseBackend(hamiltonian)


def test_parameter_count():
    assert AnsatzSpec(FockSpace(1, 4), 3).num_parameters == 3 * 6
    assert AnsatzSpec(FockSpace(2, 3), 2).num_parameters == 2 * (2 * 5 + 2)
    assert AnsatzSpec(FockSpace(3, 2), 1).num_parameters == 3 * 4 + 3 * 2
    assert not AnsatzSpec(FockSpace(1, 4), 3).all_to_all_bs


def test_circuit_layout():
    ansatz = AnsatzSpec(FockSpace(2, 2), 1)
    params = np.arange(ansatz.num_parameters, dtype=float)
    circuit = vqd.ansatz_circuit(ansatz, params)
    assert [spec.kind for spec in circuit] == [
        "snap", "snap", "displacement", "displacement", "beamsplitter"
    ]
    assert circuit[0].params == (0.0, 1.0)
    assert circuit[2].params == (complex(2.0, 3.0),)
    assert circuit[3].params == (complex(6.0, 7.0),)
    assert circuit[4].target_modes == (1, 0)
    assert circuit[4].params == (8.0, 9.0)


def test_zero_parameters_give_vacuum():
    ansatz = AnsatzSpec(FockSpace(2, 3), 2)
    state = vqd.prepare_state(ansatz, np.zeros(ansatz.num_parameters))
    assert np.allclose(state.amplitudes, fock.vacuum(ansatz.space).amplitudes)


@pytest.mark.parametrize("alpha", [0.3, 1.1])
def test_single_displacement_on_two_levels(alpha):
    ansatz = AnsatzSpec(FockSpace(1, 2), 1)
    state = vqd.prepare_state(ansatz, [0.0, 0.0, alpha, 0.0])
    assert np.allclose(state.amplitudes, [math.cos(alpha), math.sin(alpha)])


def test_wrong_parameter_count():
    with pytest.raises(ValueError):
        vqd.prepare_state(AnsatzSpec(FockSpace(1, 2), 1), [0.0, 0.0])


@pytest.mark.parametrize("seed", range(10))
def test_prepared_states_are_normalized(seed):
    rng = np.random.default_rng(seed)
    ansatz = AnsatzSpec(FockSpace(2, 4), 2)
    state = vqd.prepare_state(ansatz, rng.uniform(-1, 1, ansatz.num_parameters))
    assert np.linalg.norm(state.amplitudes) == pytest.approx(1, abs=1e-10)


def test_cost_without_deflation_is_energy():
    backend = diagonal_backend([0.5, 1.5, 2.5])
    ansatz = AnsatzSpec(backend.space, 1)
    params = np.random.default_rng(0).uniform(-0.5, 0.5, ansatz.num_parameters)
    state = vqd.prepare_state(ansatz, params)
    assert vqd.cost(params, ansatz, backend, DeflationState()) == pytest.approx(
        fock.expectation(state, backend.hamiltonian.as_operator())
    )


def test_cost_penalizes_deflated_state():
    backend = diagonal_backend([0.5, 1.5, 2.5])
    ansatz = AnsatzSpec(backend.space, 1)
    params = np.random.default_rng(1).uniform(-0.5, 0.5, ansatz.num_parameters)
    state = vqd.prepare_state(ansatz, params)
    deflation = DeflationState()
    deflation.add(state, 3.0, 0.0)
    plain = vqd.cost(params, ansatz, backend, DeflationState())
    assert vqd.cost(params, ansatz, backend, deflation) == pytest.approx(plain + 3.0)


def test_cost_of_orthogonal_state():
    """diag(0, 1) with psi = |1> and |0> deflated costs exactly 1."""
    backend = diagonal_backend([0.0, 1.0])
    ansatz = AnsatzSpec(backend.space, 1)
    params = [0.0, 0.0, math.pi / 2, 0.0]
    deflation = DeflationState()
    deflation.add(fock.basis_state(backend.space, 0), 3.0, 0.0)
    assert vqd.cost(params, ansatz, backend, deflation) == pytest.approx(1.0, abs=1e-12)


def test_deflation_needs_one_beta_per_state():
    with pytest.raises(ValueError):
        DeflationState([fock.vacuum(FockSpace(1, 2))], [], [])


def test_optimize_ground_state():
    backend = diagonal_backend([-2.0, 5.0, 7.0])
    ansatz = AnsatzSpec(backend.space, 2)
    result = vqd.optimize_state(ansatz, backend, DeflationState(), FAST, seed=0)
    assert result.energy == pytest.approx(-2.0, abs=1e-6)
    assert result.converged
    assert len(result.history) > 0


def test_optimize_deflated_state():
    """With the ground state deflated by a weight above the spectral width the next level is
    found."""
    backend = diagonal_backend([-2.0, 5.0, 7.0])
    ansatz = AnsatzSpec(backend.space, 2)
    deflation = DeflationState()
    deflation.add(fock.basis_state(backend.space, 0), 20.0, -2.0)
    result = vqd.optimize_state(ansatz, backend, deflation, FAST, seed=0)
    assert result.energy == pytest.approx(5.0, abs=ENERGY_EPSILON)


def test_small_beta_keeps_ground_state():
    """-2 + 3 is still below 5, so a weight of 3 cannot lift the ground state."""
    backend = diagonal_backend([-2.0, 5.0, 7.0])
    ansatz = AnsatzSpec(backend.space, 2)
    deflation = DeflationState()
    deflation.add(fock.basis_state(backend.space, 0), 3.0, -2.0)
    result = vqd.optimize_state(ansatz, backend, deflation, FAST, seed=0)
    assert result.cost == pytest.approx(1.0, abs=ENERGY_EPSILON)
    assert result.energy < 0


def test_mismatched_spaces():
    backend = diagonal_backend([0.0, 1.0])
    with pytest.raises(ValueError):
        vqd.optimize_state(AnsatzSpec(FockSpace(1, 3), 1), backend, DeflationState(), FAST)


def test_run_vqd_on_diagonal():
    backend = diagonal_backend([0.0, 1.0, 2.0, 3.0])
    ansatz = AnsatzSpec(backend.space, 3)
    result = vqd.run_vqd(ansatz, backend, 4, betas=10.0, config=FAST, seed=0)
    assert result.energies == pytest.approx((0.0, 1.0, 2.0, 3.0), abs=ENERGY_EPSILON)
    assert result.all_converged
    assert result.distinct_energies == pytest.approx(result.energies)
    for i in range(4):
        for j in range(i):
            assert fock.overlap(result.states[i], result.states[j]) < 0.05


def test_run_vqd_single_state_matches_optimize_state():
    backend = diagonal_backend([1.0, -1.0, 0.5])
    ansatz = AnsatzSpec(backend.space, 2)
    result = vqd.run_vqd(ansatz, backend, 1, config=FAST, seed=7)
    direct = vqd.optimize_state(
        ansatz, backend, DeflationState(), FAST, seed=np.random.SeedSequence(7).spawn(1)[0]
    )
    assert result.energies[0] == direct.energy
    assert np.array_equal(result.parameters[0], direct.params)


def test_run_vqd_is_deterministic():
    backend = diagonal_backend([0.0, 0.7, 1.9])
    ansatz = AnsatzSpec(backend.space, 2)
    first = vqd.run_vqd(ansatz, backend, 2, config=FAST, seed=3)
    second = vqd.run_vqd(ansatz, backend, 2, config=FAST, seed=3, threads=2)
    assert first.energies == second.energies
    for a, b in zip(first.parameters, second.parameters):
        assert np.array_equal(a, b)


def test_variational_bound():
    backend = diagonal_backend([0.3, 1.0, 2.0])
    ansatz = AnsatzSpec(backend.space, 1)
    result = vqd.run_vqd(ansatz, backend, 2, betas=5.0, config=FAST, seed=0)
    assert all(energy >= 0.3 - 1e-9 for energy in result.energies)
    assert list(result.energies) == sorted(result.energies)


def test_deduplicate_energies():
    assert vqd.deduplicate_energies([1.0 + 2e-6, 0.0, 1e-7, 1.0], 1e-6) == (0.0, 1.0, 1.0 + 2e-6)


def test_resolve_betas():
    backend = diagonal_backend([0.0, 4.0])
    assert vqd.resolve_betas(3.0, 3, backend) == [3.0, 3.0, 3.0]
    assert vqd.resolve_betas("auto", 2, backend) == [8.0, 8.0]
    assert vqd.resolve_betas([1.0, 2.0], 3, backend) == [1.0, 2.0, 2.0]
    with pytest.raises(ValueError):
        vqd.resolve_betas([1.0], 3, backend)
    with pytest.raises(ValueError):
        vqd.resolve_betas("big", 2, backend)


def test_embedding_keeps_low_spectrum(data_dir):
    from qumvqd.core import symmetry
    restricted = symmetry.load_restricted_hamiltonian(data_dir / "h2_sto3g" / "h2_0.735.json", 2)
    embedded = vqd.embed_hamiltonian(restricted, 2)
    assert embedded.space == FockSpace(3, 2)
    spectrum = fock.eigenvalues(embedded)
    assert spectrum[:6] == pytest.approx(fock.eigenvalues(restricted), abs=1e-12)
    assert spectrum[6] > fock.eigenvalues(restricted)[-1]


def test_dense_backend_needs_a_space():
    hamiltonian = DenseHamiltonian(np.eye(3), (0, 1, 2))
    with pytest.raises(ValueError):
        vqd.DenseBackend(hamiltonian)
    assert vqd.DenseBackend.from_hamiltonian(hamiltonian, 2).space == FockSpace(2, 2)


@pytest.mark.parametrize("seed", range(5))
def test_fragment_and_dense_backends_agree_pointwise(seed):
    rng = np.random.default_rng(seed)
    fragment_set = fragments.synthetic_fragment_set(1, 5, 3, rng)
    fragment_backend = vqd.FragmentBackend(fragment_set)
    dense_backend = vqd.DenseBackend(fragments.reconstruct_hamiltonian(fragment_set))
    amplitudes = StateVector.normalized(
        fragment_set.space, rng.normal(size=5) + 1j * rng.normal(size=5)
    ).amplitudes
    assert fragment_backend.energy(amplitudes) == pytest.approx(
        dense_backend.energy(amplitudes), abs=1e-8
    )


def test_fragment_and_dense_runs_agree():
    fragment_set = fragments.synthetic_fragment_set(
        1, 4, 2, np.random.default_rng(11), frequencies=[100.0], coupling_scale=0.5
    )
    ansatz = AnsatzSpec(fragment_set.space, 2)
    by_fragments = vqd.run_vqd(ansatz, vqd.FragmentBackend(fragment_set), 2, "auto", FAST, 5)
    dense = vqd.DenseBackend(fragments.reconstruct_hamiltonian(fragment_set))
    by_matrix = vqd.run_vqd(ansatz, dense, 2, "auto", FAST, 5)
    assert by_fragments.units == "cm-1"
    assert by_fragments.energies == pytest.approx(by_matrix.energies, abs=1e-6)


@pytest.mark.parametrize("restarts", [1, 2])
def test_evaluation_budget_includes_polish(restarts):
    """Finite-difference gradients of the polish count against max_evals."""
    backend = diagonal_backend([0.0, 1.0, 2.0, 3.0])
    ansatz = AnsatzSpec(backend.space, 2)
    config = OptimizerConfig(restarts=restarts, max_evals=200, polish_max_iter=50)
    result = vqd.optimize_state(ansatz, backend, DeflationState(), config, seed=0)
    assert result.evaluations <= restarts * config.max_evals


def test_exhausted_budget_is_not_converged():
    backend = diagonal_backend([0.0, 1.0, 2.0, 3.0])
    ansatz = AnsatzSpec(backend.space, 3)
    config = OptimizerConfig(restarts=1, max_evals=30)
    result = vqd.optimize_state(ansatz, backend, DeflationState(), config, seed=0)
    assert result.evaluations <= 30
    assert not result.converged
    assert np.isfinite(result.energy)


def test_polish_restarts_stall_detection():
    backend = diagonal_backend([0.0, 1.0])
    objective = vqd._Objective(
        AnsatzSpec(backend.space, 1), backend, DeflationState(), tol=1e-9, patience=3,
        max_evals=100,
    )
    objective.best_cost = 1.0
    for _ in range(3):
        objective.callback()
    with pytest.raises(StopIteration):
        objective.callback()
    assert objective.stalled
    objective.start_phase()
    assert not objective.stalled
    # A flat history from the previous optimizer does not count towards the new patience.
    for _ in range(3):
        objective.callback()
    with pytest.raises(StopIteration):
        objective.callback()


def brute_force_gradient(params, ansatz, backend, deflation, step=1e-6):
    gradient = np.zeros(len(params))
    for i in range(len(params)):
        shifted = np.array(params, dtype=float)
        shifted[i] += step
        forward = vqd.cost(shifted, ansatz, backend, deflation)
        shifted[i] -= 2 * step
        backward = vqd.cost(shifted, ansatz, backend, deflation)
        gradient[i] = (forward - backward) / (2 * step)
    return gradient


@pytest.mark.parametrize("seed", range(3))
def test_circuit_gradient_matches_differences(seed):
    rng = np.random.default_rng(seed)
    space = FockSpace(2, 3)
    matrix = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    hamiltonian = DenseHamiltonian(
        matrix + matrix.conj().T, tuple(range(9)), space=space
    )
    backend = vqd.DenseBackend(hamiltonian)
    ansatz = AnsatzSpec(space, 2)
    deflation = DeflationState()
    deflation.add(vqd.prepare_state(ansatz, rng.uniform(-1, 1, ansatz.num_parameters)), 2.5, 0.0)
    params = rng.uniform(-1, 1, ansatz.num_parameters)
    assert vqd.cost_gradient(params, ansatz, backend, deflation, 1e-5) == pytest.approx(
        brute_force_gradient(params, ansatz, backend, deflation), abs=1e-5
    )


def test_circuit_gradient_with_fragments():
    rng = np.random.default_rng(4)
    fragment_set = fragments.synthetic_fragment_set(1, 6, 2, rng, frequencies=[100.0])
    backend = vqd.FragmentBackend(fragment_set)
    ansatz = AnsatzSpec(backend.space, 2)
    params = rng.uniform(-0.5, 0.5, ansatz.num_parameters)
    expected = brute_force_gradient(params, ansatz, backend, DeflationState())
    found = vqd.cost_gradient(params, ansatz, backend, DeflationState(), 1e-5)
    assert np.max(np.abs(found - expected)) < 1e-4 * max(1.0, np.max(np.abs(expected)))


def test_undersized_beta_marks_state_unconverged(caplog):
    """With beta = 1 the second state falls back onto the ground state at cost -1 < 5."""
    backend = diagonal_backend([-2.0, 5.0, 7.0])
    ansatz = AnsatzSpec(backend.space, 2)
    with caplog.at_level("WARNING", logger="qumvqd.core.vqd"):
        result = vqd.run_vqd(ansatz, backend, 2, betas=1.0, config=FAST, seed=0)
    assert "overlaps state 0" in caplog.text
    assert not result.all_converged
    assert result.energies[1] < 0


@pytest.mark.parametrize("fraction", [0.0, 1.5])
def test_simplex_fraction_bounds(fraction):
    with pytest.raises(ValueError):
        OptimizerConfig(simplex_fraction=fraction)
