"""Closed-form molecular-orbital integrals for H2 in the STO-3G basis.

Both atoms carry one contracted 1s Gaussian, so every overlap, kinetic, nuclear attraction and
electron repulsion integral has an analytic form in terms of the Boys function F0. The restricted
Hartree-Fock orbitals of a homonuclear diatomic are fixed by symmetry: sigma_g = (phi_A + phi_B)
and sigma_u = (phi_A - phi_B), each normalized with the atomic overlap. No SCF iterations are
needed.
"""
import itertools
import math

import numpy as np
import scipy.special

BOHR_IN_ANGSTROM = 0.52917721092

STO3G_H_EXPONENTS = np.array([3.42525091, 0.62391373, 0.16885540])
STO3G_H_COEFFICIENTS = np.array([0.15432897, 0.53532814, 0.44463454])


def boys_f0(t):
    if t < 1e-12:
        return 1.0 - t / 3.0
    return 0.5 * math.sqrt(math.pi / t) * scipy.special.erf(math.sqrt(t))


def _primitive_weights():
    norms = (2.0 * STO3G_H_EXPONENTS / math.pi) ** 0.75
    weights = STO3G_H_COEFFICIENTS * norms
    self_overlap = sum(
        weights[i] * weights[j] * (math.pi / (STO3G_H_EXPONENTS[i] + STO3G_H_EXPONENTS[j])) ** 1.5
        for i, j in itertools.product(range(3), repeat=2)
    )
    return weights / math.sqrt(self_overlap)


def _one_electron(positions, weights):
    overlap = np.zeros((2, 2))
    core = np.zeros((2, 2))
    for m, n in itertools.product(range(2), repeat=2):
        ra, rb = positions[m], positions[n]
        distance2 = (ra - rb) ** 2
        for i, j in itertools.product(range(3), repeat=2):
            a, b = STO3G_H_EXPONENTS[i], STO3G_H_EXPONENTS[j]
            weight = weights[i] * weights[j]
            p = a + b
            mu = a * b / p
            s = (math.pi / p) ** 1.5 * math.exp(-mu * distance2)
            overlap[m, n] += weight * s
            core[m, n] += weight * mu * (3.0 - 2.0 * mu * distance2) * s
            center = (a * ra + b * rb) / p
            for nucleus in positions:
                core[m, n] -= weight * 2.0 * math.pi / p * math.exp(-mu * distance2) * boys_f0(
                    p * (center - nucleus) ** 2
                )
    return overlap, core


def _repulsion(positions, weights):
    eri = np.zeros((2, 2, 2, 2))
    primitives = list(itertools.product(range(3), repeat=4))
    for m, n, l, s in itertools.product(range(2), repeat=4):
        ra, rb, rc, rd = positions[m], positions[n], positions[l], positions[s]
        value = 0.0
        for i, j, k, q in primitives:
            a, b, c, d = STO3G_H_EXPONENTS[[i, j, k, q]]
            p = a + b
            r = c + d
            bra_center = (a * ra + b * rb) / p
            ket_center = (c * rc + d * rd) / r
            value += (
                weights[i] * weights[j] * weights[k] * weights[q]
                * 2.0 * math.pi ** 2.5 / (p * r * math.sqrt(p + r))
                * math.exp(-a * b / p * (ra - rb) ** 2 - c * d / r * (rc - rd) ** 2)
                * boys_f0(p * r / (p + r) * (bra_center - ket_center) ** 2)
            )
        eri[m, n, l, s] = value
    return eri


def h2_sto3g_integrals(bond_length):
    """Molecular-orbital integrals of H2/STO-3G at bond_length angstrom.

    Returns (one_body, two_body, nuclear_repulsion) in hartree with two_body in chemists'
    notation (pq|rs), orbital 0 the bonding sigma_g and orbital 1 the antibonding sigma_u.
    """
    if not bond_length > 0:
        raise ValueError(f"Bond length must be positive, got {bond_length}")
    separation = bond_length / BOHR_IN_ANGSTROM
    positions = (0.0, separation)
    weights = _primitive_weights()
    overlap, core = _one_electron(positions, weights)
    s = overlap[0, 1]
    coefficients = np.array([
        [1.0, 1.0],
        [1.0, -1.0],
    ]) / np.sqrt(2.0 * (1.0 + np.array([[s], [-s]])))
    one_body = coefficients @ core @ coefficients.T
    two_body = np.einsum(
        "pm,qn,rl,st,mnlt->pqrs",
        coefficients, coefficients, coefficients, coefficients,
        _repulsion(positions, weights),
    )
    return one_body, two_body, 1.0 / separation
