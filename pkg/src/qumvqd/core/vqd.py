"""Qumode variational quantum deflation.

The ansatz stacks D layers of one SNAP and one displacement per qumode, followed by an
all-to-all beam-splitter layer when there is more than one qumode. Eigenstates are found one at a
time: state n minimizes its energy plus beta_m |<psi_m|psi>|^2 for every earlier state m. The
penalty only steers the optimizer; reported energies are plain backend energies.
"""
import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from . import fock
from . import gates
from .fragments import FragmentEvaluator, FragmentSet
from .fock import DenseHamiltonian, FockSpace, StateVector
from .symmetry import qumode_count

logger = logging.getLogger(__name__)

DEFAULT_BETA = 3.0
# Energies closer than this are one level when deduplicating, per unit.
DEGENERACY_TOLERANCE = {"hartree": 1e-6, "cm-1": 1e-3}
# Budget charge of one circuit gradient against max_evals.
GRADIENT_EVALUATIONS = 2
# Overlap with an earlier state at or above which a state counts as not deflated.
OVERLAP_LIMIT = 0.05


@dataclasses.dataclass(frozen=True)
class AnsatzSpec:
    space: FockSpace
    depth: int

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError(f"Ansatz depth must be nonnegative, got {self.depth}")

    @property
    def all_to_all_bs(self):
        return self.space.num_modes > 1

    @property
    def pairs(self):
        n = self.space.num_modes
        return [(p, q) for q in range(n) for p in range(q + 1, n)]

    @property
    def layer_size(self):
        n = self.space.num_modes
        return n * (self.space.cutoff + 2) + 2 * len(self.pairs)

    @property
    def num_parameters(self):
        return self.depth * self.layer_size


def _ansatz_layout(ansatz: AnsatzSpec, params):
    """Gates of the ansatz in application order, each with the parameter indices it reads."""
    params = np.asarray(params, dtype=float)
    if params.shape != (ansatz.num_parameters,):
        raise ValueError(
            f"Ansatz needs {ansatz.num_parameters} parameters, got {params.shape[0]}"
        )
    d = ansatz.space.cutoff
    layout = []
    position = 0
    for _ in range(ansatz.depth):
        displacements = []
        for mode in range(ansatz.space.num_modes):
            thetas = params[position:position + d]
            alpha = complex(params[position + d], params[position + d + 1])
            layout.append((
                gates.GateSpec(gates.SNAP, (mode,), tuple(thetas)),
                tuple(range(position, position + d)),
            ))
            displacements.append((
                gates.GateSpec(gates.DISPLACEMENT, (mode,), (alpha,)),
                (position + d, position + d + 1),
            ))
            position += d + 2
        layout.extend(displacements)
        for p, q in ansatz.pairs:
            beta, phi = params[position:position + 2]
            layout.append((
                gates.GateSpec(gates.BEAMSPLITTER, (p, q), (beta, phi)),
                (position, position + 1),
            ))
            position += 2
    return layout


def ansatz_circuit(ansatz: AnsatzSpec, params):
    """Gates of the ansatz in application order."""
    return [spec for spec, _ in _ansatz_layout(ansatz, params)]


def _prepare_amplitudes(ansatz, params):
    space = ansatz.space
    amplitudes = np.zeros(space.total_dim, dtype=complex)
    amplitudes[0] = 1
    for spec in ansatz_circuit(ansatz, params):
        amplitudes = gates.apply_gate(space, amplitudes, spec)
    return amplitudes


def prepare_state(ansatz: AnsatzSpec, params) -> StateVector:
    return StateVector.normalized(ansatz.space, _prepare_amplitudes(ansatz, params))


def embed_hamiltonian(hamiltonian: DenseHamiltonian, cutoff, padding_energy=None):
    """Place a (typically particle-number restricted) Hamiltonian on the smallest qumode register
    of the given cutoff that holds it. Its basis occupies the lowest register indices in order;
    unused Fock levels get a diagonal energy above the whole spectrum so they never enter the low
    end of the spectrum."""
    dim = hamiltonian.dimension
    space = FockSpace(max(1, qumode_count(dim, cutoff)), cutoff)
    if padding_energy is None:
        spectrum = scipy.linalg.eigvalsh(hamiltonian.matrix)
        padding_energy = spectrum[-1] + max(1.0, spectrum[-1] - spectrum[0])
    matrix = np.zeros((space.total_dim, space.total_dim), dtype=complex)
    matrix[:dim, :dim] = hamiltonian.matrix
    padding = np.arange(dim, space.total_dim)
    matrix[padding, padding] = padding_energy
    return DenseHamiltonian(
        matrix=matrix,
        basis_labels=tuple(range(space.total_dim)),
        source=hamiltonian.source,
        units=hamiltonian.units,
        space=space,
    )


class DenseBackend:
    """Energies as <psi|H|psi> with a dense matrix over the ansatz register."""

    def __init__(self, hamiltonian: DenseHamiltonian):
        if hamiltonian.space is None:
            raise ValueError("DenseBackend needs a Hamiltonian over a FockSpace; embed it first")
        self.hamiltonian = hamiltonian
        self.space = hamiltonian.space
        self.units = hamiltonian.units
        self._matrix = np.asarray(hamiltonian.matrix)

    @classmethod
    def from_hamiltonian(cls, hamiltonian: DenseHamiltonian, cutoff=None, padding_energy=None):
        if hamiltonian.space is not None and cutoff in (None, hamiltonian.space.cutoff):
            return cls(hamiltonian)
        if cutoff is None:
            raise ValueError("A cutoff is needed to embed a Hamiltonian without a FockSpace")
        return cls(embed_hamiltonian(hamiltonian, cutoff, padding_energy))

    @property
    def descriptor(self):
        return f"dense {self.space.num_modes}x{self.space.cutoff} {self.hamiltonian.source}".strip()

    def energy(self, amplitudes):
        value = np.vdot(amplitudes, self._matrix @ amplitudes)
        if abs(value.imag) >= fock.IMAGINARY_TOLERANCE * max(1.0, abs(value.real)):
            raise fock.NumericalConsistencyError(
                f"Energy has imaginary residue {value.imag!r}"
            )
        return float(value.real)

    def apply(self, amplitudes):
        return self._matrix @ amplitudes

    def energy_bounds(self):
        """Gershgorin bounds on the spectrum."""
        matrix = self._matrix
        radii = np.sum(np.abs(matrix), axis=1) - np.abs(np.diag(matrix))
        centers = np.real(np.diag(matrix))
        return float(np.min(centers - radii)), float(np.max(centers + radii))


class FragmentBackend:
    """Energies as the fixed-order sum of fragment expectations."""

    def __init__(self, fragment_set: FragmentSet, threads=1):
        self.fragment_set = fragment_set
        self.evaluator = FragmentEvaluator(fragment_set, threads=threads)
        self.space = fragment_set.space
        self.units = "cm-1"

    @property
    def descriptor(self):
        return (
            f"fragments x{len(self.fragment_set.fragments)} "
            f"{self.space.num_modes}x{self.space.cutoff} {self.fragment_set.source}"
        ).strip()

    def energy(self, amplitudes):
        return self.evaluator.energy(amplitudes)

    def apply(self, amplitudes):
        return self.evaluator.apply(amplitudes)

    def energy_bounds(self):
        lower = sum(float(np.min(f.diag)) for f in self.fragment_set.fragments)
        upper = sum(float(np.max(f.diag)) for f in self.fragment_set.fragments)
        return lower, upper


@dataclasses.dataclass
class DeflationState:
    converged_states: list = dataclasses.field(default_factory=list)
    betas: list = dataclasses.field(default_factory=list)
    energies: list = dataclasses.field(default_factory=list)

    def __post_init__(self):
        if len(self.betas) != len(self.converged_states):
            raise ValueError("Every deflated state needs exactly one beta")

    def add(self, state: StateVector, beta, energy):
        self.converged_states.append(state)
        self.betas.append(float(beta))
        self.energies.append(float(energy))

    def penalty(self, amplitudes):
        total = 0.0
        for state, beta in zip(self.converged_states, self.betas):
            total += beta * abs(np.vdot(state.amplitudes, amplitudes)) ** 2
        return total

    def apply(self, amplitudes):
        """The penalty as an operator, sum_m beta_m |psi_m><psi_m|, applied to amplitudes."""
        result = np.zeros_like(amplitudes, dtype=complex)
        for state, beta in zip(self.converged_states, self.betas):
            result += beta * np.vdot(state.amplitudes, amplitudes) * state.amplitudes
        return result


@dataclasses.dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 5
    max_evals: int = 20_000
    tol: float = 1e-9
    patience: int = 50
    polish: bool = True
    fd_step: float = 1e-5
    polish_max_iter: int = 2_000
    init_scale: float = 0.1
    # Share of max_evals Nelder-Mead may spend when a polish follows.
    simplex_fraction: float = 0.5

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("At least one restart is required")
        if self.max_evals < 1:
            raise ValueError("max_evals must be positive")
        if not 0 < self.simplex_fraction <= 1:
            raise ValueError(f"simplex_fraction must lie in (0, 1], got {self.simplex_fraction}")


@dataclasses.dataclass(frozen=True)
class StateOptimization:
    params: np.ndarray
    energy: float
    cost: float
    history: tuple
    evaluations: int
    converged: bool
    restart: int


@dataclasses.dataclass(frozen=True)
class VQDResult:
    energies: tuple
    states: tuple
    parameters: tuple
    histories: tuple
    evaluations: tuple
    converged: tuple
    seed: int
    backend: str
    units: str
    distinct_energies: tuple

    @property
    def all_converged(self):
        return all(self.converged)

    def convergence_summaries(self):
        return [
            {
                "state_index": i,
                "energy": energy,
                "converged": converged,
                "evaluations": evaluations,
                "iterations": len(history),
            }
            for i, (energy, converged, evaluations, history) in enumerate(zip(
                self.energies, self.converged, self.evaluations, self.histories
            ))
        ]


def cost(params, ansatz: AnsatzSpec, backend, deflation: DeflationState):
    amplitudes = _prepare_amplitudes(ansatz, params)
    return backend.energy(amplitudes) + deflation.penalty(amplitudes)


def _shifted_spec(spec, role, delta):
    if spec.kind == gates.DISPLACEMENT:
        (alpha,) = spec.params
        shifted = (alpha + (delta if role == 0 else 1j * delta),)
    else:
        shifted = list(spec.params)
        shifted[role] += delta
    return gates.GateSpec(spec.kind, spec.target_modes, tuple(shifted))


def cost_gradient(params, ansatz: AnsatzSpec, backend, deflation: DeflationState, step):
    """Gradient of cost by one forward and one backward pass through the circuit.

    With M = H + sum_m beta_m |psi_m><psi_m| the derivative for a parameter of gate j is
    2 Re <lambda_j| dU_j |psi_{j-1}>, where lambda_j is M|psi> carried back through the gates
    after j. SNAP phases are differentiated exactly; displacement and beam-splitter parameters by a
    central difference of the gate matrix with the given step.
    """
    space = ansatz.space
    cutoff = space.cutoff
    layout = _ansatz_layout(ansatz, params)
    matrices = [gates.local_gate_matrix(spec, cutoff) for spec, _ in layout]
    psi = np.zeros(space.total_dim, dtype=complex)
    psi[0] = 1
    for (spec, _), matrix in zip(layout, matrices):
        psi = fock.apply_local(space, psi, matrix, spec.target_modes)
    covector = backend.apply(psi) + deflation.apply(psi)
    gradient = np.zeros(ansatz.num_parameters)
    for (spec, indices), matrix in zip(reversed(layout), reversed(matrices)):
        modes = spec.target_modes
        inverse = matrix.conj().T
        if spec.kind == gates.SNAP:
            weights = (np.conj(covector) * psi).reshape(space.tensor_shape)
            axis = space.axis(modes[0])
            per_level = np.sum(weights, axis=tuple(a for a in range(space.num_modes) if a != axis))
            gradient[list(indices)] = -2.0 * per_level.imag
            psi = fock.apply_local(space, psi, inverse, modes)
        else:
            psi = fock.apply_local(space, psi, inverse, modes)
            for role, index in enumerate(indices):
                derivative = (
                    gates.local_gate_matrix(_shifted_spec(spec, role, step), cutoff)
                    - gates.local_gate_matrix(_shifted_spec(spec, role, -step), cutoff)
                ) / (2 * step)
                moved = fock.apply_local(space, psi, derivative, modes)
                gradient[index] = 2.0 * np.vdot(covector, moved).real
        covector = fock.apply_local(space, covector, inverse, modes)
    return gradient


class _BudgetExhausted(Exception):
    pass


class _Objective:
    """Cost function that tracks the best point seen, per-iteration best costs, and stalls.
    Calls past max_evals raise _BudgetExhausted."""

    def __init__(self, ansatz, backend, deflation, tol, patience, max_evals):
        self.ansatz = ansatz
        self.backend = backend
        self.deflation = deflation
        self.tol = tol
        self.patience = patience
        self.max_evals = max_evals
        self.evaluations = 0
        self.best_cost = np.inf
        self.best_params = None
        self.history = []
        self.phase_start = 0
        self.stalled = False

    @property
    def remaining(self):
        return self.max_evals - self.evaluations

    def start_phase(self):
        """Stall detection compares only iterations of the current optimizer."""
        self.phase_start = len(self.history)
        self.stalled = False

    def __call__(self, params):
        if self.evaluations >= self.max_evals:
            raise _BudgetExhausted
        self.evaluations += 1
        value = cost(params, self.ansatz, self.backend, self.deflation)
        if value < self.best_cost:
            self.best_cost = value
            self.best_params = np.array(params, dtype=float)
        return value

    def gradient(self, params, step):
        """Forward plus backward pass, charged as GRADIENT_EVALUATIONS cost evaluations."""
        if self.evaluations + GRADIENT_EVALUATIONS > self.max_evals:
            raise _BudgetExhausted
        self.evaluations += GRADIENT_EVALUATIONS
        return cost_gradient(params, self.ansatz, self.backend, self.deflation, step)

    def callback(self, *args, **kwargs):
        self.history.append(self.best_cost)
        phase = self.history[self.phase_start:]
        if len(phase) > self.patience:
            if phase[-self.patience - 1] - phase[-1] < self.tol:
                self.stalled = True
                raise StopIteration


def _run_restart(ansatz, backend, deflation, config: OptimizerConfig, seed_sequence, index):
    rng = np.random.default_rng(seed_sequence)
    x0 = rng.uniform(-config.init_scale, config.init_scale, ansatz.num_parameters)
    objective = _Objective(
        ansatz, backend, deflation, config.tol, config.patience, config.max_evals
    )
    converged = False
    if ansatz.num_parameters == 0:
        objective(x0)
        converged = True
    else:
        simplex_budget = config.max_evals
        if config.polish:
            simplex_budget = min(config.max_evals, max(
                ansatz.num_parameters + 2, int(config.max_evals * config.simplex_fraction)
            ))
        try:
            result = scipy.optimize.minimize(
                objective,
                x0,
                method="Nelder-Mead",
                callback=objective.callback,
                options={
                    "maxfev": simplex_budget,
                    "xatol": 1e-10,
                    "fatol": config.tol,
                    "adaptive": ansatz.num_parameters > 4,
                },
            )
            converged = bool(result.success) or objective.stalled
        except _BudgetExhausted:
            converged = False
        per_step = 1 + GRADIENT_EVALUATIONS
        if config.polish and objective.remaining >= per_step:
            objective.start_phase()
            try:
                polish = scipy.optimize.minimize(
                    objective,
                    objective.best_params,
                    method="L-BFGS-B",
                    jac=lambda x: objective.gradient(x, config.fd_step),
                    callback=objective.callback,
                    options={
                        "maxiter": config.polish_max_iter,
                        "maxfun": max(1, objective.remaining // per_step),
                        "ftol": 1e-15,
                        "gtol": 1e-9,
                    },
                )
                converged = converged or bool(polish.success) or objective.stalled
            except _BudgetExhausted:
                logger.debug("Restart %d spent its %d evaluations while polishing",
                             index, config.max_evals)
    params = objective.best_params
    energy = backend.energy(_prepare_amplitudes(ansatz, params))
    return StateOptimization(
        params=params,
        energy=energy,
        cost=objective.best_cost,
        history=tuple(objective.history),
        evaluations=objective.evaluations,
        converged=converged,
        restart=index,
    )


def optimize_state(ansatz: AnsatzSpec, backend, deflation: DeflationState,
                   config: OptimizerConfig, seed=0, threads=1) -> StateOptimization:
    """Best of several seeded restarts: Nelder-Mead from a small random start, then L-BFGS-B
    polishing on cost_gradient, all within max_evals per restart. The lowest cost wins, ties go to
    the lower restart."""
    if ansatz.space != backend.space:
        raise ValueError(f"Ansatz space {ansatz.space} does not match backend {backend.space}")
    if isinstance(seed, np.random.SeedSequence):
        sequence = seed
    else:
        sequence = np.random.SeedSequence(seed)
    children = sequence.spawn(config.restarts)
    jobs = list(enumerate(children))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results = list(executor.map(
                lambda job: _run_restart(ansatz, backend, deflation, config, job[1], job[0]),
                jobs,
            ))
    else:
        results = [_run_restart(ansatz, backend, deflation, config, child, index)
                   for index, child in jobs]
    best = min(results, key=lambda result: (result.cost, result.restart))
    converged = any(result.converged for result in results) and best.converged
    if not converged:
        logger.warning("State did not converge; keeping best cost %.12g", best.cost)
    return dataclasses.replace(
        best,
        converged=converged,
        evaluations=sum(result.evaluations for result in results),
    )


def resolve_betas(betas, k, backend):
    """Expand a beta setting to one weight per deflated state. "auto" takes twice the width of
    the backend's spectral bounds, which always exceeds every gap."""
    if betas is None:
        betas = DEFAULT_BETA
    if isinstance(betas, str):
        if betas != "auto":
            raise ValueError(f"Unknown beta setting {betas!r}")
        lower, upper = backend.energy_bounds()
        return [2.0 * max(upper - lower, 1e-12)] * k
    if isinstance(betas, (int, float)):
        return [float(betas)] * k
    betas = [float(beta) for beta in betas]
    if len(betas) < k - 1:
        raise ValueError(f"Need at least {k - 1} betas for {k} states, got {len(betas)}")
    return betas + [betas[-1] if betas else DEFAULT_BETA] * (k - len(betas))


def deduplicate_energies(energies, tolerance):
    distinct = []
    for energy in sorted(energies):
        if not distinct or energy - distinct[-1] > tolerance:
            distinct.append(energy)
    return tuple(distinct)


def run_vqd(ansatz: AnsatzSpec, backend, k, betas=DEFAULT_BETA,
            config: Optional[OptimizerConfig] = None, seed=0, threads=1) -> VQDResult:
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    config = config or OptimizerConfig()
    betas = resolve_betas(betas, k, backend)
    state_seeds = np.random.SeedSequence(seed).spawn(k)
    deflation = DeflationState()
    found = []
    for index in range(k):
        if deflation.energies:
            spread = max(deflation.energies) - min(deflation.energies)
            smallest = min(deflation.betas)
            if smallest < spread:
                logger.warning(
                    "beta %.6g is smaller than the energy spread %.6g found so far; deflation "
                    "may fail to push state %d above lower states", smallest, spread, index,
                )
        optimization = optimize_state(
            ansatz, backend, deflation, config, seed=state_seeds[index], threads=threads
        )
        state = prepare_state(ansatz, optimization.params)
        overlaps = [fock.overlap(state, earlier) for earlier in deflation.converged_states]
        if overlaps and max(overlaps) >= OVERLAP_LIMIT:
            earlier = int(np.argmax(overlaps))
            logger.warning(
                "State %d overlaps state %d by %.3g; raise beta to separate them",
                index, earlier, overlaps[earlier],
            )
            optimization = dataclasses.replace(optimization, converged=False)
        logger.info(
            "State %d: energy %.12g %s (%s, %d evaluations)",
            index, optimization.energy, backend.units,
            "converged" if optimization.converged else "NOT converged",
            optimization.evaluations,
        )
        found.append((optimization, state))
        deflation.add(state, betas[index], optimization.energy)
    found.sort(key=lambda item: item[0].energy)
    energies = tuple(item[0].energy for item in found)
    tolerance = DEGENERACY_TOLERANCE.get(backend.units, 1e-6)
    return VQDResult(
        energies=energies,
        states=tuple(item[1] for item in found),
        parameters=tuple(item[0].params for item in found),
        histories=tuple(item[0].history for item in found),
        evaluations=tuple(item[0].evaluations for item in found),
        converged=tuple(item[0].converged for item in found),
        seed=int(seed),
        backend=backend.descriptor,
        units=backend.units,
        distinct_energies=deduplicate_energies(energies, tolerance),
    )
