"""Hardware noise models.

Two models are provided. The gate-fidelity model maps a per-entangling-gate error probability to
an expected energy error through the survival probability of the whole circuit. The amplitude
damping model simulates photon loss with Kraus operators

    K_l = sqrt((1 - e^{-kappa tau})^l / l!) e^{-kappa tau n / 2} a^l,   l = 1 .. l_max,

and replaces K_0 by sqrt(I - sum_{l >= 1} K_l^dagger K_l) so that the truncated set stays trace
preserving. The channel is applied after every gate to every mode the gate touches.
"""
import dataclasses
import logging
import math

import numpy as np
import scipy.linalg

from . import fock
from . import gates
from .batch import run_batch
from .common import CHEMICAL_ACCURACY, NumericalConsistencyError, SPECTROSCOPIC_ACCURACY
from .fock import DenseHamiltonian, DensityMatrix, FockSpace

logger = logging.getLogger(__name__)

DEFAULT_L_MAX = 8
# Eigenvalues of I - sum K^dagger K in [-CLAMP_TOLERANCE, 0) are rounding and clamped to zero.
CLAMP_TOLERANCE = 1e-12
# Frobenius change of rho under doubled l_max above which l_max is reported as too small.
L_MAX_CHECK_TOLERANCE = 1e-8

# Entangling gate counts for the CO2 ground state: beam splitters in the qumode circuit, CX gates
# in the qubit circuits.
QUMODE_BS_COUNT = 26
QUBIT_CHC_CX_COUNT = 900
QUBIT_UVCC_CX_COUNT = 7000
CO2_GROUND_ENERGY = 2532.06


@dataclasses.dataclass(frozen=True)
class AmplitudeDampingChannel:
    kappa_tau: float
    space: FockSpace
    mode: int = 0
    l_max: int = DEFAULT_L_MAX

    def __post_init__(self):
        if not np.isfinite(self.kappa_tau) or self.kappa_tau < 0:
            raise ValueError(f"kappa_tau must be a nonnegative number, got {self.kappa_tau}")
        if self.l_max < 1:
            raise ValueError(f"l_max must be at least 1, got {self.l_max}")
        self.space.check_mode(self.mode)


@dataclasses.dataclass(frozen=True)
class GateFidelityModel:
    error_prob: float
    entangling_gate_count: int
    reference_energy: float
    units: str = "cm-1"

    def __post_init__(self):
        if not 0 <= self.error_prob <= 1:
            raise ValueError(f"Error probability must lie in [0, 1], got {self.error_prob}")
        if self.entangling_gate_count < 0:
            raise ValueError(f"Gate count must be nonnegative, got {self.entangling_gate_count}")


@dataclasses.dataclass(frozen=True)
class NoiseSweepRow:
    model: str
    parameter: float
    energy: float
    abs_error: float
    exceeds_threshold: bool
    crossing: bool = False
    gate_count: int = None


def _sqrt_psd(matrix):
    eigenvalues, eigenvectors = scipy.linalg.eigh((matrix + matrix.conj().T) / 2)
    smallest = float(eigenvalues[0])
    if smallest < -CLAMP_TOLERANCE:
        raise NumericalConsistencyError(
            f"K0 square-root argument has eigenvalue {smallest:.3g} below -{CLAMP_TOLERANCE}"
        )
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    return (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.conj().T


def local_kraus_operators(kappa_tau, l_max, cutoff):
    """Kraus operators of one mode as d x d arrays, K_0' first. Terms with l >= d vanish in the
    truncated space and are left out."""
    if not np.isfinite(kappa_tau) or kappa_tau < 0:
        raise ValueError(f"kappa_tau must be a nonnegative number, got {kappa_tau}")
    if l_max < 1:
        raise ValueError(f"l_max must be at least 1, got {l_max}")
    loss = -math.expm1(-kappa_tau)
    a = fock.local_lowering(cutoff)
    decay = np.diag(np.exp(-0.5 * kappa_tau * np.arange(cutoff)))
    operators = []
    a_power = np.eye(cutoff, dtype=complex)
    for l in range(1, min(l_max, cutoff - 1) + 1):
        a_power = a_power @ a
        weight = math.sqrt(loss ** l / math.factorial(l))
        operators.append(weight * decay @ a_power)
    remainder = np.eye(cutoff, dtype=complex)
    for operator in operators:
        remainder -= operator.conj().T @ operator
    return [_sqrt_psd(remainder)] + operators


def kraus_operators(channel: AmplitudeDampingChannel):
    locals_ = local_kraus_operators(channel.kappa_tau, channel.l_max, channel.space.cutoff)
    return [fock.embed_operator(channel.space, local, (channel.mode,)) for local in locals_]


def _apply_local_kraus(space, matrix, operators, mode):
    result = np.zeros_like(matrix)
    for local in operators:
        result += fock.apply_local_to_density(space, matrix, local, (mode,))
    return result


def _warn_if_l_max_short(matrix, doubled, l_max):
    difference = float(np.linalg.norm(matrix - doubled))
    logger.debug("Doubling l_max from %d changes rho by %.3g", l_max, difference)
    if difference >= L_MAX_CHECK_TOLERANCE:
        logger.warning(
            "l_max=%d is too small: doubling it changes rho by %.3g (Frobenius norm)",
            l_max, difference,
        )


def apply_channel(channel: AmplitudeDampingChannel, rho: DensityMatrix) -> DensityMatrix:
    if channel.space != rho.space:
        raise ValueError(f"Channel space {channel.space} does not match state space {rho.space}")
    operators = local_kraus_operators(channel.kappa_tau, channel.l_max, channel.space.cutoff)
    matrix = _apply_local_kraus(channel.space, rho.matrix, operators, channel.mode)
    if logger.isEnabledFor(logging.DEBUG):
        doubled = local_kraus_operators(
            channel.kappa_tau, 2 * channel.l_max, channel.space.cutoff
        )
        _warn_if_l_max_short(
            matrix, _apply_local_kraus(channel.space, rho.matrix, doubled, channel.mode),
            channel.l_max,
        )
    return DensityMatrix(channel.space, (matrix + matrix.conj().T) / 2)


def _evolve_density(space, circuit, operators, kappa_tau):
    rho = np.zeros((space.total_dim, space.total_dim), dtype=complex)
    rho[0, 0] = 1
    for spec in circuit:
        local = gates.local_gate_matrix(spec, space.cutoff)
        rho = fock.apply_local_to_density(space, rho, local, spec.target_modes)
        if kappa_tau > 0:
            for mode in spec.target_modes:
                rho = _apply_local_kraus(space, rho, operators, mode)
    return rho


def noisy_circuit_expectation(circuit, channel: AmplitudeDampingChannel,
                              hamiltonian: DenseHamiltonian) -> float:
    """Density-matrix evolution of the circuit from vacuum with the channel after every gate on
    every mode that gate touches; returns Tr(rho H). Only kappa_tau and l_max of the channel are
    used, its mode is taken from each gate."""
    space = channel.space
    if hamiltonian.space is not None and hamiltonian.space != space:
        raise ValueError(f"Hamiltonian space {hamiltonian.space} does not match {space}")
    if hamiltonian.dimension != space.total_dim:
        raise ValueError(
            f"Hamiltonian dimension {hamiltonian.dimension} does not match {space.total_dim}"
        )
    operators = local_kraus_operators(channel.kappa_tau, channel.l_max, space.cutoff)
    rho = _evolve_density(space, circuit, operators, channel.kappa_tau)
    if logger.isEnabledFor(logging.DEBUG) and channel.kappa_tau > 0:
        doubled = local_kraus_operators(channel.kappa_tau, 2 * channel.l_max, space.cutoff)
        _warn_if_l_max_short(
            rho, _evolve_density(space, circuit, doubled, channel.kappa_tau), channel.l_max
        )
    rho = DensityMatrix(space, (rho + rho.conj().T) / 2)
    observable = fock.OperatorMatrix(space, hamiltonian.matrix, hermitian_flag=True)
    return fock.expectation(rho, observable)


def fidelity_energy_error(model: GateFidelityModel) -> float:
    """Expected |energy error| (1 - (1 - p)^n) |E_ref|: the state is taken to be lost entirely
    as soon as any entangling gate fails."""
    p, n = model.error_prob, model.entangling_gate_count
    if n == 0 or p == 0:
        return 0.0
    if p == 1:
        return abs(model.reference_energy)
    return float(-math.expm1(n * math.log1p(-p)) * abs(model.reference_energy))


def _flag_crossings(rows):
    """Mark the first point, in ascending parameter order, where the error reaches the
    threshold after lying below it."""
    order = sorted(range(len(rows)), key=lambda i: rows[i].parameter)
    flagged = list(rows)
    previous_below = None
    for i in order:
        row = rows[i]
        if row.exceeds_threshold and previous_below:
            flagged[i] = dataclasses.replace(row, crossing=True)
            break
        previous_below = not row.exceeds_threshold
    return flagged


def kraus_sweep(circuit, hamiltonian: DenseHamiltonian, kappa_tau_grid, reference_energy,
                l_max=DEFAULT_L_MAX, threshold=CHEMICAL_ACCURACY, threads=1, progress_bar=False):
    space = hamiltonian.fock_space

    def evaluate(kappa_tau):
        channel = AmplitudeDampingChannel(kappa_tau, space, 0, l_max)
        energy = noisy_circuit_expectation(circuit, channel, hamiltonian)
        error = abs(energy - reference_energy)
        return NoiseSweepRow("kraus", float(kappa_tau), energy, error, error >= threshold)

    rows = run_batch(evaluate, kappa_tau_grid, threads=threads,
                     description="Kraus sweep", progress_bar=progress_bar)
    rows = _flag_crossings(rows)
    for row in rows:
        if row.crossing:
            logger.info("Energy error reaches %.3g at kappa_tau = %.3g", threshold, row.parameter)
    return rows


def fidelity_sweep(error_prob_grid, gate_counts, reference_energy,
                   threshold=SPECTROSCOPIC_ACCURACY, units="cm-1"):
    """One curve per gate count over the error probability grid. The energy column is the
    reference shifted up by the expected error."""
    rows = []
    for count in gate_counts:
        curve = []
        for p in error_prob_grid:
            error = fidelity_energy_error(GateFidelityModel(p, count, reference_energy, units))
            curve.append(NoiseSweepRow(
                "fidelity", float(p), reference_energy + error, error, error >= threshold,
                gate_count=int(count),
            ))
        rows.extend(_flag_crossings(curve))
    return rows
