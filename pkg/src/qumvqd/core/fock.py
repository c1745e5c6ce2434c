"""Dense linear algebra over truncated multimode Fock spaces.

A register of N qumodes, each truncated at cutoff d, has d^N basis states. Basis index i encodes
the per-mode occupations as base-d digits with mode 0 the least significant digit, so for two
modes index = n_0 + d * n_1. Reshaping a state vector to a tensor of shape (d,) * N in NumPy's
C order puts mode m on axis N - 1 - m. Every module uses this single convention.
"""
import dataclasses
from typing import Optional, Union

import numpy as np
import scipy.linalg

from .common import InputInconsistencyError, NumericalConsistencyError

NORM_TOLERANCE = 1e-10
HERMITIAN_TOLERANCE = 1e-10
UNITARY_TOLERANCE = 1e-8
PSD_TOLERANCE = 1e-9
IMAGINARY_TOLERANCE = 1e-9
# Hamiltonians further than this from Hermitian are rejected rather than symmetrized.
HAMILTONIAN_TOLERANCE = 1e-8
# Above this dimension the positive-semidefinite check on DensityMatrix is skipped.
PSD_CHECK_MAX_DIM = 4096


def _frozen_array(array, dtype=complex):
    result = np.array(array, dtype=dtype)
    result.setflags(write=False)
    return result


def _hermitian_defect(matrix):
    return float(np.max(np.abs(matrix - matrix.conj().T), initial=0.0))


@dataclasses.dataclass(frozen=True)
class FockSpace:
    num_modes: int
    cutoff: int

    def __post_init__(self):
        if int(self.num_modes) != self.num_modes or self.num_modes < 1:
            raise ValueError(f"num_modes must be a positive integer, got {self.num_modes}")
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise ValueError(f"cutoff must be a positive integer, got {self.cutoff}")

    @property
    def total_dim(self):
        return self.cutoff ** self.num_modes

    @property
    def tensor_shape(self):
        return (self.cutoff,) * self.num_modes

    def check_mode(self, mode):
        if not 0 <= mode < self.num_modes:
            raise ValueError(f"Mode {mode} out of range for {self.num_modes} qumode(s)")

    def axis(self, mode):
        """Tensor axis holding the given mode."""
        return self.num_modes - 1 - mode

    def occupations(self, index):
        """Per-mode occupations (mode 0 first) of a basis index."""
        result = []
        for _ in range(self.num_modes):
            index, digit = divmod(index, self.cutoff)
            result.append(digit)
        return tuple(result)

    def index(self, occupations):
        if len(occupations) != self.num_modes:
            raise ValueError(f"Expected {self.num_modes} occupations, got {len(occupations)}")
        result = 0
        for mode, n in enumerate(occupations):
            if not 0 <= n < self.cutoff:
                raise ValueError(f"Occupation {n} of mode {mode} exceeds cutoff {self.cutoff}")
            result += n * self.cutoff ** mode
        return result


@dataclasses.dataclass(frozen=True)
class StateVector:
    space: FockSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = _frozen_array(self.amplitudes)
        if amplitudes.shape != (self.space.total_dim,):
            raise ValueError(
                f"Expected {self.space.total_dim} amplitudes, got shape {amplitudes.shape}"
            )
        if not np.all(np.isfinite(amplitudes)):
            raise ValueError("State amplitudes must be finite")
        norm = np.linalg.norm(amplitudes)
        if abs(norm - 1) > NORM_TOLERANCE:
            raise NumericalConsistencyError(f"State is not normalized (norm {norm!r})")
        object.__setattr__(self, "amplitudes", amplitudes)

    @classmethod
    def normalized(cls, space, amplitudes):
        amplitudes = np.asarray(amplitudes, dtype=complex)
        norm = np.linalg.norm(amplitudes)
        if norm == 0:
            raise ValueError("Cannot normalize the zero vector")
        return cls(space, amplitudes / norm)

    def probabilities(self):
        return np.abs(self.amplitudes) ** 2


@dataclasses.dataclass(frozen=True)
class DensityMatrix:
    space: FockSpace
    matrix: np.ndarray

    def __post_init__(self):
        matrix = _frozen_array(self.matrix)
        dim = self.space.total_dim
        if matrix.shape != (dim, dim):
            raise ValueError(f"Expected a {dim}x{dim} density matrix, got shape {matrix.shape}")
        if _hermitian_defect(matrix) > HERMITIAN_TOLERANCE:
            raise NumericalConsistencyError("Density matrix is not Hermitian")
        trace = np.trace(matrix)
        if abs(trace - 1) > NORM_TOLERANCE:
            raise NumericalConsistencyError(f"Density matrix trace is {trace!r}, expected 1")
        if dim <= PSD_CHECK_MAX_DIM:
            min_eigenvalue = scipy.linalg.eigvalsh(matrix)[0]
            if min_eigenvalue < -PSD_TOLERANCE:
                raise NumericalConsistencyError(
                    f"Density matrix has negative eigenvalue {min_eigenvalue!r}"
                )
        object.__setattr__(self, "matrix", matrix)

    def populations(self):
        return np.real(np.diag(self.matrix)).copy()


@dataclasses.dataclass(frozen=True)
class OperatorMatrix:
    space: FockSpace
    matrix: np.ndarray
    hermitian_flag: bool = False
    unitary_flag: bool = False

    def __post_init__(self):
        matrix = _frozen_array(self.matrix)
        dim = self.space.total_dim
        if matrix.shape != (dim, dim):
            raise ValueError(f"Expected a {dim}x{dim} operator, got shape {matrix.shape}")
        if self.hermitian_flag and _hermitian_defect(matrix) >= HERMITIAN_TOLERANCE:
            raise NumericalConsistencyError("Operator flagged Hermitian is not Hermitian")
        if self.unitary_flag:
            defect = np.max(np.abs(matrix.conj().T @ matrix - np.eye(dim)), initial=0.0)
            if defect >= UNITARY_TOLERANCE:
                raise NumericalConsistencyError(
                    f"Operator flagged unitary deviates from unitarity by {defect!r}"
                )
        object.__setattr__(self, "matrix", matrix)

    @property
    def dagger(self):
        return OperatorMatrix(
            self.space, self.matrix.conj().T, self.hermitian_flag, self.unitary_flag
        )

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            _check_same_space(self.space, other.space)
            return OperatorMatrix(
                self.space,
                self.matrix @ other.matrix,
                unitary_flag=self.unitary_flag and other.unitary_flag,
            )
        if isinstance(other, StateVector):
            _check_same_space(self.space, other.space)
            if not self.unitary_flag:
                raise ValueError("Only operators flagged unitary can be applied to a state")
            return StateVector(self.space, self.matrix @ other.amplitudes)
        return NotImplemented


@dataclasses.dataclass(frozen=True)
class DenseHamiltonian:
    """Hermitian matrix over a basis of integer labels. Electronic Hamiltonians carry Fock indices
    of the 2^M Jordan-Wigner basis (possibly filtered to one particle-number sector); vibrational
    and embedded Hamiltonians carry the indices of their FockSpace."""

    matrix: np.ndarray
    basis_labels: tuple
    num_spin_orbitals: Optional[int] = None
    num_electrons: Optional[int] = None
    source: str = ""
    units: str = "hartree"
    space: Optional[FockSpace] = None

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=complex)
        labels = tuple(int(label) for label in self.basis_labels)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Hamiltonian must be square, got shape {matrix.shape}")
        if matrix.shape[0] != len(labels):
            raise ValueError(
                f"Hamiltonian dimension {matrix.shape[0]} does not match "
                f"{len(labels)} basis labels"
            )
        if not np.all(np.isfinite(matrix)):
            raise ValueError("Hamiltonian entries must be finite")
        scale = max(1.0, float(np.max(np.abs(matrix), initial=0.0)))
        defect = _hermitian_defect(matrix)
        if defect > HAMILTONIAN_TOLERANCE * scale:
            raise InputInconsistencyError(f"Hamiltonian is not Hermitian (defect {defect!r})")
        if self.num_electrons is not None:
            for label in labels:
                if int(label).bit_count() != self.num_electrons:
                    raise InputInconsistencyError(
                        f"Basis label {label} does not have Hamming weight {self.num_electrons}"
                    )
        if self.space is not None and self.space.total_dim != len(labels):
            raise ValueError("Hamiltonian dimension does not match its FockSpace")
        object.__setattr__(self, "matrix", _frozen_array((matrix + matrix.conj().T) / 2))
        object.__setattr__(self, "basis_labels", labels)

    @property
    def dimension(self):
        return len(self.basis_labels)

    @property
    def fock_space(self):
        """The FockSpace the matrix acts on. Restricted Hamiltonians without a register of their
        own are treated as a single flat mode of cutoff equal to their dimension."""
        if self.space is not None:
            return self.space
        return FockSpace(1, self.dimension)

    def as_operator(self):
        return OperatorMatrix(self.fock_space, self.matrix, hermitian_flag=True)


def _check_same_space(a, b):
    if a != b:
        raise ValueError(f"Space mismatch: {a} vs {b}")


def vacuum(space):
    amplitudes = np.zeros(space.total_dim, dtype=complex)
    amplitudes[0] = 1
    return StateVector(space, amplitudes)


def basis_state(space, occupations):
    if isinstance(occupations, (int, np.integer)):
        occupations = (int(occupations),) + (0,) * (space.num_modes - 1)
    amplitudes = np.zeros(space.total_dim, dtype=complex)
    amplitudes[space.index(tuple(occupations))] = 1
    return StateVector(space, amplitudes)


def density_from_state(state):
    amplitudes = state.amplitudes
    return DensityMatrix(state.space, np.outer(amplitudes, amplitudes.conj()))


def local_lowering(cutoff):
    return np.diag(np.sqrt(np.arange(1, cutoff, dtype=float)), k=1).astype(complex)


def _contract(tensor, local, axes, num_local):
    """Apply a local operator (reshaped to 2 * num_local axes, output axes first) to the given
    tensor axes, leaving the result axes where the inputs were."""
    result = np.tensordot(local, tensor, axes=(list(range(num_local, 2 * num_local)), axes))
    return np.moveaxis(result, list(range(num_local)), axes)


def _local_tensor(local, cutoff, num_local):
    # Local operators act on FockSpace(num_local, cutoff): local mode i sits on local axis
    # num_local - 1 - i. Reorder so local mode 0 comes first to line up with `modes`.
    tensor = np.asarray(local).reshape((cutoff,) * (2 * num_local))
    order = list(reversed(range(num_local)))
    return tensor.transpose(order + [num_local + i for i in order])


def _check_local(space, local, modes):
    modes = tuple(int(mode) for mode in modes)
    for mode in modes:
        space.check_mode(mode)
    if len(set(modes)) != len(modes):
        raise ValueError(f"Local operator modes must be distinct, got {modes}")
    expected = space.cutoff ** len(modes)
    if np.shape(local) != (expected, expected):
        raise ValueError(f"Expected a {expected}x{expected} local operator, got {np.shape(local)}")
    return modes


def apply_local(space, vector, local, modes):
    """Apply an operator on the given modes (a matrix over FockSpace(len(modes), d), local mode i
    acting on modes[i]) to a raw amplitude vector of the full register."""
    modes = _check_local(space, local, modes)
    tensor = np.asarray(vector).reshape(space.tensor_shape)
    local_tensor = _local_tensor(local, space.cutoff, len(modes))
    axes = [space.axis(mode) for mode in modes]
    return _contract(tensor, local_tensor, axes, len(modes)).reshape(space.total_dim)


def apply_local_to_density(space, matrix, local, modes):
    """Conjugate a raw density matrix by a local operator: A rho A^dagger."""
    modes = _check_local(space, local, modes)
    n = space.num_modes
    tensor = np.asarray(matrix).reshape(space.tensor_shape * 2)
    local_tensor = _local_tensor(local, space.cutoff, len(modes))
    row_axes = [space.axis(mode) for mode in modes]
    column_axes = [n + axis for axis in row_axes]
    tensor = _contract(tensor, local_tensor, row_axes, len(modes))
    tensor = _contract(tensor, local_tensor.conj(), column_axes, len(modes))
    return tensor.reshape(space.total_dim, space.total_dim)


def embed_operator(space, local, modes, hermitian=False, unitary=False):
    """Tensor a local operator with the identity on every other mode."""
    modes = _check_local(space, local, modes)
    identity = np.eye(space.total_dim, dtype=complex).reshape(space.tensor_shape * 2)
    local_tensor = _local_tensor(local, space.cutoff, len(modes))
    tensor = _contract(identity, local_tensor, [space.axis(mode) for mode in modes], len(modes))
    return OperatorMatrix(
        space,
        tensor.reshape(space.total_dim, space.total_dim),
        hermitian_flag=hermitian,
        unitary_flag=unitary,
    )


def lowering_op(space, mode):
    space.check_mode(mode)
    return embed_operator(space, local_lowering(space.cutoff), (mode,))


def creation_op(space, mode):
    return lowering_op(space, mode).dagger


def number_op(space, mode):
    space.check_mode(mode)
    local = np.diag(np.arange(space.cutoff, dtype=float)).astype(complex)
    return embed_operator(space, local, (mode,), hermitian=True)


def total_number_op(space):
    labels = np.arange(space.total_dim)
    total = np.zeros(space.total_dim)
    for _ in range(space.num_modes):
        labels, digits = np.divmod(labels, space.cutoff)
        total += digits
    return OperatorMatrix(space, np.diag(total).astype(complex), hermitian_flag=True)


def exponentiate(matrix):
    """Return (e^A, is_unitary). Hermitian and anti-Hermitian inputs go through a Hermitian
    eigendecomposition, which makes the exponential of an anti-Hermitian generator unitary to
    machine precision; anything else uses scipy's scaling-and-squaring expm."""
    matrix = np.asarray(matrix, dtype=complex)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("Cannot exponentiate a matrix with non-finite entries")
    scale = max(1.0, float(np.max(np.abs(matrix), initial=0.0)))
    if np.max(np.abs(matrix + matrix.conj().T), initial=0.0) <= 1e-14 * scale:
        # A = iH with H Hermitian.
        hermitian = -1j * matrix
        eigenvalues, eigenvectors = scipy.linalg.eigh((hermitian + hermitian.conj().T) / 2)
        return (eigenvectors * np.exp(1j * eigenvalues)) @ eigenvectors.conj().T, True
    if np.max(np.abs(matrix - matrix.conj().T), initial=0.0) <= 1e-14 * scale:
        eigenvalues, eigenvectors = scipy.linalg.eigh((matrix + matrix.conj().T) / 2)
        return (eigenvectors * np.exp(eigenvalues)) @ eigenvectors.conj().T, False
    return scipy.linalg.expm(matrix), False


def matrix_exp(operator):
    result, is_unitary = exponentiate(operator.matrix)
    return OperatorMatrix(operator.space, result, unitary_flag=is_unitary)


def expectation(state: Union[StateVector, DensityMatrix], observable: OperatorMatrix) -> float:
    if not observable.hermitian_flag:
        raise ValueError("Expectation values require an observable flagged Hermitian")
    _check_same_space(state.space, observable.space)
    if isinstance(state, StateVector):
        value = np.vdot(state.amplitudes, observable.matrix @ state.amplitudes)
    elif isinstance(state, DensityMatrix):
        value = np.trace(state.matrix @ observable.matrix)
    else:
        raise ValueError(f"Unsupported state type {type(state).__name__}")
    if abs(value.imag) >= IMAGINARY_TOLERANCE:
        raise NumericalConsistencyError(
            f"Expectation has imaginary residue {value.imag!r} for a Hermitian observable"
        )
    return float(value.real)


def overlap(a: StateVector, b: StateVector) -> float:
    _check_same_space(a.space, b.space)
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def exact_diagonalize(hamiltonian: DenseHamiltonian):
    """Exact eigenpairs in ascending eigenvalue order, used as the oracle for every VQD run."""
    matrix = hamiltonian.matrix
    scale = max(1.0, float(np.max(np.abs(matrix), initial=0.0)))
    if _hermitian_defect(matrix) > HAMILTONIAN_TOLERANCE * scale:
        raise ValueError("Cannot diagonalize a non-Hermitian matrix")
    space = hamiltonian.fock_space
    eigenvalues, eigenvectors = scipy.linalg.eigh(matrix)
    return [
        (float(eigenvalue), StateVector.normalized(space, eigenvectors[:, i]))
        for i, eigenvalue in enumerate(eigenvalues)
    ]


def eigenvalues(hamiltonian: DenseHamiltonian):
    return scipy.linalg.eigvalsh(hamiltonian.matrix)
