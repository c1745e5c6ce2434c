"""Bosonic gates as unitaries over a FockSpace: SNAP, displacement, beam splitter and single-mode
squeezing.

Every gate is the exponential of its generator truncated at the cutoff, not the truncation of the
infinite-dimensional gate. The truncated generators are anti-Hermitian, so the gates are exactly
unitary; large |alpha| or zeta relative to sqrt(d) still distort them, which is what the leakage
checks on displacement_gate and squeeze_gate catch.
"""
import dataclasses
import functools
import logging

import numpy as np
import scipy.linalg

from . import fock
from .common import TruncationError

logger = logging.getLogger(__name__)

SNAP = "snap"
DISPLACEMENT = "displacement"
BEAMSPLITTER = "beamsplitter"
SQUEEZE = "squeeze"
GATE_KINDS = (SNAP, DISPLACEMENT, BEAMSPLITTER, SQUEEZE)

# Population allowed on the top two Fock levels of S(zeta)|0> before the squeeze gate is refused.
SQUEEZE_LEAKAGE_LIMIT = 1e-8
# Population on the top Fock level of D(alpha)|0> above which a warning is logged.
DISPLACEMENT_LEAKAGE_LIMIT = 1e-6


@dataclasses.dataclass(frozen=True)
class GateSpec:
    """One gate of a circuit. params holds the SNAP phases (length d), (alpha,) for a
    displacement with complex alpha, (beta, phi) for a beam splitter and (zeta, phi) for a
    squeeze."""

    kind: str
    target_modes: tuple
    params: tuple

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"Unknown gate kind {self.kind!r}")
        modes = tuple(int(mode) for mode in self.target_modes)
        expected = 2 if self.kind == BEAMSPLITTER else 1
        if len(modes) != expected:
            raise ValueError(f"{self.kind} gate acts on {expected} mode(s), got {modes}")
        if len(set(modes)) != len(modes):
            raise ValueError(f"Beam splitter needs two distinct modes, got {modes}")
        object.__setattr__(self, "target_modes", modes)
        object.__setattr__(self, "params", tuple(self.params))


def _local_pair_lowering(cutoff):
    a = fock.local_lowering(cutoff)
    identity = np.eye(cutoff)
    # Two-mode local index is n_0 + d * n_1.
    return np.kron(identity, a), np.kron(a, identity)


def snap_matrix(thetas, cutoff):
    thetas = np.asarray(thetas, dtype=float)
    if thetas.shape != (cutoff,):
        raise ValueError(f"SNAP needs exactly {cutoff} phases, got {thetas.shape[0]}")
    return np.diag(np.exp(1j * thetas))


@functools.lru_cache(maxsize=None)
def _quadrature_eigensystem(cutoff):
    """Eigendecomposition of -i(a^dagger - a), the Hermitian generator of real displacements."""
    a = fock.local_lowering(cutoff)
    hermitian = -1j * (a.conj().T - a)
    eigenvalues, eigenvectors = scipy.linalg.eigh((hermitian + hermitian.conj().T) / 2)
    eigenvalues.flags.writeable = False
    eigenvectors.flags.writeable = False
    return eigenvalues, eigenvectors


def displacement_matrix(alpha, cutoff):
    """D(r e^{i theta}) = R(theta) exp(r (a^dagger - a)) R(theta)^dagger with the phase rotation
    R(theta) = diag(e^{i n theta}), so every amplitude reuses one cached eigendecomposition."""
    alpha = complex(alpha)
    if not np.isfinite(alpha):
        raise ValueError(f"Displacement amplitude must be finite, got {alpha}")
    eigenvalues, eigenvectors = _quadrature_eigensystem(cutoff)
    phases = np.exp(1j * np.angle(alpha) * np.arange(cutoff))
    left = phases[:, None] * eigenvectors * np.exp(1j * abs(alpha) * eigenvalues)
    right = eigenvectors.conj().T * phases.conj()[None, :]
    return left @ right


def beamsplitter_matrix(beta, phi, cutoff):
    b_j, b_k = _local_pair_lowering(cutoff)
    generator = 0.5j * beta * (
        np.exp(1j * phi) * b_j.conj().T @ b_k + np.exp(-1j * phi) * b_k.conj().T @ b_j
    )
    return fock.exponentiate(generator)[0]


def squeeze_matrix(zeta, phi, cutoff):
    if not np.isfinite(zeta) or not np.isfinite(phi):
        raise ValueError("Squeezing parameters must be finite")
    a = fock.local_lowering(cutoff)
    a_dagger = a.conj().T
    generator = 0.5 * (
        zeta * np.exp(1j * phi) * a_dagger @ a_dagger - zeta * np.exp(-1j * phi) * a @ a
    )
    return fock.exponentiate(generator)[0]


def local_gate_matrix(spec: GateSpec, cutoff):
    """Matrix of the gate over FockSpace(len(spec.target_modes), cutoff)."""
    if spec.kind == SNAP:
        return snap_matrix(spec.params, cutoff)
    if spec.kind == DISPLACEMENT:
        (alpha,) = spec.params
        return displacement_matrix(alpha, cutoff)
    if spec.kind == BEAMSPLITTER:
        beta, phi = spec.params
        return beamsplitter_matrix(beta, phi, cutoff)
    zeta, phi = spec.params if len(spec.params) == 2 else (spec.params[0], 0.0)
    return squeeze_matrix(zeta, phi, cutoff)


def gate_matrix(space, spec: GateSpec):
    local = local_gate_matrix(spec, space.cutoff)
    return fock.embed_operator(space, local, spec.target_modes, unitary=True)


def apply_gate(space, vector, spec: GateSpec):
    """Apply a gate to a raw amplitude vector without building the register-sized matrix."""
    local = local_gate_matrix(spec, space.cutoff)
    return fock.apply_local(space, vector, local, spec.target_modes)


def snap_gate(space, mode, thetas):
    return gate_matrix(space, GateSpec(SNAP, (mode,), tuple(thetas)))


def displacement_gate(space, mode, alpha):
    space.check_mode(mode)
    local = displacement_matrix(alpha, space.cutoff)
    leakage = abs(local[-1, 0]) ** 2
    if leakage > DISPLACEMENT_LEAKAGE_LIMIT:
        logger.warning(
            "Displacement alpha=%s leaks %.3g population to the top Fock level at cutoff %d",
            alpha, leakage, space.cutoff,
        )
    return fock.embed_operator(space, local, (mode,), unitary=True)


def beamsplitter_gate(space, mode_j, mode_k, beta, phi):
    if mode_j == mode_k:
        raise ValueError(f"Beam splitter needs two distinct modes, got {mode_j} twice")
    return gate_matrix(space, GateSpec(BEAMSPLITTER, (mode_j, mode_k), (beta, phi)))


def squeeze_gate(space, mode, zeta, phi=0.0):
    space.check_mode(mode)
    local = squeeze_matrix(zeta, phi, space.cutoff)
    # Squeezed vacuum only populates even levels, so the top two levels are checked.
    leakage = float(np.sum(np.abs(local[-2:, 0]) ** 2))
    if leakage >= SQUEEZE_LEAKAGE_LIMIT:
        raise TruncationError(
            f"Squeezing zeta={zeta} puts {leakage:.3g} population on the top two Fock "
            f"levels at cutoff {space.cutoff}; raise the cutoff"
        )
    return fock.embed_operator(space, local, (mode,), unitary=True)
