"""Electronic Hamiltonians: ingestion, Jordan-Wigner matrices, and particle-number sectors.

Under Jordan-Wigner, bit j of a basis label is the occupation of spin orbital j, so the Hamming
weight of a label is its electron count. Restricting a number-conserving Hamiltonian to one
Hamming weight shrinks 2^M states to C(M, n_e) without touching its spectrum in that sector.
"""
import dataclasses
import json
import math
import pathlib
from typing import Optional

import numpy as np
import scipy.sparse

from .common import (
    CapacityError,
    InputInconsistencyError,
    ParseError,
    SymmetryViolationError,
    format_csv,
    load_json,
    write_csv,
)
from .fock import DenseHamiltonian

# Largest register assembled densely (2^14 basis states).
MAX_SPIN_ORBITALS = 14
JORDAN_WIGNER_TOLERANCE = 1e-10
SYMMETRY_TOLERANCE = 1e-10
_ROW_CHUNK = 512

COMPRESSION_COLUMNS = (
    "M", "n_e", "full_dim", "restricted_dim", "ratio", "qumodes_full", "qumodes_restricted"
)

# (M, n_e) of the H2, H4 and LiH STO-3G systems and LiH 6-31G.
REFERENCE_SYSTEMS = ((4, 2), (8, 4), (12, 4), (22, 4))


@dataclasses.dataclass(frozen=True)
class FermionTerm:
    coefficient: float
    # (orbital, dagger) factors, applied right to left like any operator product.
    ops: tuple


@dataclasses.dataclass(frozen=True)
class FermionicHamiltonian:
    num_spin_orbitals: int
    terms: tuple
    metadata: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.num_spin_orbitals < 1:
            raise ValueError("num_spin_orbitals must be positive")
        terms = tuple(self.terms)
        for i, term in enumerate(terms):
            if not math.isfinite(term.coefficient):
                raise ValueError(f"Term {i} has a non-finite coefficient")
            for orbital, _ in term.ops:
                if not 0 <= orbital < self.num_spin_orbitals:
                    raise ValueError(
                        f"Term {i} references orbital {orbital} outside "
                        f"0..{self.num_spin_orbitals - 1}"
                    )
        object.__setattr__(self, "terms", terms)

    def describe(self):
        system = self.metadata.get("system", "")
        geometry = self.metadata.get("geometry", "")
        return " ".join(part for part in (system, geometry) if part)


@dataclasses.dataclass(frozen=True)
class CompressionReport:
    num_spin_orbitals: int
    num_electrons: int
    cutoff: int
    full_dim: int
    restricted_dim: int
    ratio: float
    qumodes_full: int
    qumodes_restricted: int

    def as_row(self):
        return (
            self.num_spin_orbitals,
            self.num_electrons,
            self.full_dim,
            self.restricted_dim,
            self.ratio,
            self.qumodes_full,
            self.qumodes_restricted,
        )


def hamming_weight(index):
    if index < 0:
        raise ValueError(f"Hamming weight is defined for nonnegative integers, got {index}")
    return int(index).bit_count()


def hamming_weights(num_spin_orbitals):
    labels = np.arange(2 ** num_spin_orbitals)
    weights = np.zeros_like(labels)
    for bit in range(num_spin_orbitals):
        weights += (labels >> bit) & 1
    return weights


def _creation_matrix(num_spin_orbitals, orbital):
    """a^dagger_j as (X_j - iY_j)/2 with a Z string on orbitals below j."""
    dim = 2 ** num_spin_orbitals
    labels = np.arange(dim)
    sources = labels[((labels >> orbital) & 1) == 0]
    targets = sources | (1 << orbital)
    parity = np.zeros_like(sources)
    for bit in range(orbital):
        parity ^= (sources >> bit) & 1
    signs = 1.0 - 2.0 * parity
    return scipy.sparse.csr_matrix((signs, (targets, sources)), shape=(dim, dim))


def jordan_wigner_to_matrix(hamiltonian: FermionicHamiltonian) -> DenseHamiltonian:
    num_spin_orbitals = hamiltonian.num_spin_orbitals
    if num_spin_orbitals > MAX_SPIN_ORBITALS:
        raise CapacityError(
            f"{num_spin_orbitals} spin orbitals exceed the dense limit of {MAX_SPIN_ORBITALS}; "
            "ingest the Hamiltonian pre-filtered instead"
        )
    dim = 2 ** num_spin_orbitals
    creation = [_creation_matrix(num_spin_orbitals, j) for j in range(num_spin_orbitals)]
    identity = scipy.sparse.identity(dim, format="csr")
    total = scipy.sparse.csr_matrix((dim, dim), dtype=complex)
    for term in hamiltonian.terms:
        product = identity
        for orbital, dagger in term.ops:
            factor = creation[orbital] if dagger else creation[orbital].T
            product = product @ factor
        total = total + term.coefficient * product
    defect = abs(total - total.conj().T)
    if defect.nnz and defect.max() > JORDAN_WIGNER_TOLERANCE:
        raise InputInconsistencyError(
            f"Hamiltonian is not Hermitian after Jordan-Wigner mapping "
            f"(defect {defect.max():.3g}); check for missing conjugate terms"
        )
    return DenseHamiltonian(
        matrix=total.toarray(),
        basis_labels=tuple(range(dim)),
        num_spin_orbitals=num_spin_orbitals,
        source=hamiltonian.describe(),
        units="hartree",
    )


def _check_number_conserving(matrix, weights):
    for start in range(0, matrix.shape[0], _ROW_CHUNK):
        rows = matrix[start:start + _ROW_CHUNK]
        mask = weights[start:start + _ROW_CHUNK, np.newaxis] != weights[np.newaxis, :]
        if np.any(mask):
            largest = np.max(np.abs(rows[mask]))
            if largest > SYMMETRY_TOLERANCE:
                raise SymmetryViolationError(
                    f"Hamiltonian couples different particle numbers (element {largest:.3g})"
                )


def filter_by_particle_number(hamiltonian: DenseHamiltonian, num_electrons) -> DenseHamiltonian:
    num_spin_orbitals = hamiltonian.num_spin_orbitals
    if num_spin_orbitals is None or hamiltonian.num_electrons is not None:
        raise ValueError("Particle-number filtering needs an unfiltered electronic Hamiltonian")
    if hamiltonian.basis_labels != tuple(range(2 ** num_spin_orbitals)):
        raise ValueError("Particle-number filtering needs the full 2^M basis")
    if not 0 <= num_electrons <= num_spin_orbitals:
        raise ValueError(f"n_e must lie in 0..{num_spin_orbitals}, got {num_electrons}")
    weights = hamming_weights(num_spin_orbitals)
    _check_number_conserving(hamiltonian.matrix, weights)
    indices = np.flatnonzero(weights == num_electrons)
    return DenseHamiltonian(
        matrix=hamiltonian.matrix[np.ix_(indices, indices)],
        basis_labels=tuple(int(i) for i in indices),
        num_spin_orbitals=num_spin_orbitals,
        num_electrons=num_electrons,
        source=hamiltonian.source,
        units=hamiltonian.units,
    )


def qumode_count(dim, cutoff):
    """Smallest q with cutoff^q >= dim, in exact integer arithmetic."""
    if cutoff < 2:
        raise ValueError(f"Cutoff must be at least 2, got {cutoff}")
    count = 0
    while cutoff ** count < dim:
        count += 1
    return count


def compression_report(num_spin_orbitals, num_electrons, cutoff) -> CompressionReport:
    if num_spin_orbitals < 1:
        raise ValueError(f"M must be positive, got {num_spin_orbitals}")
    if not 0 <= num_electrons <= num_spin_orbitals:
        raise ValueError(f"n_e must lie in 0..{num_spin_orbitals}, got {num_electrons}")
    if cutoff < 2:
        raise ValueError(f"Cutoff must be at least 2, got {cutoff}")
    full_dim = 2 ** num_spin_orbitals
    restricted_dim = math.comb(num_spin_orbitals, num_electrons)
    return CompressionReport(
        num_spin_orbitals=num_spin_orbitals,
        num_electrons=num_electrons,
        cutoff=cutoff,
        full_dim=full_dim,
        restricted_dim=restricted_dim,
        ratio=full_dim / restricted_dim,
        qumodes_full=qumode_count(full_dim, cutoff),
        qumodes_restricted=qumode_count(restricted_dim, cutoff),
    )


def compression_csv(reports):
    return format_csv(COMPRESSION_COLUMNS, [report.as_row() for report in reports])


def write_compression_csv(reports, path):
    write_csv(path, COMPRESSION_COLUMNS, [report.as_row() for report in reports])


def sector_dimensions(num_spin_orbitals):
    return [math.comb(num_spin_orbitals, n) for n in range(num_spin_orbitals + 1)]


def stirling_central_binomial(num_spin_orbitals):
    """Stirling estimate of C(M, M/2): sqrt(2 / (pi M)) 2^M."""
    if num_spin_orbitals < 2 or num_spin_orbitals % 2:
        raise ValueError(f"M must be an even integer >= 2, got {num_spin_orbitals}")
    return math.sqrt(2 / (math.pi * num_spin_orbitals)) * 2.0 ** num_spin_orbitals


def stirling_relative_error(num_spin_orbitals):
    exact = math.comb(num_spin_orbitals, num_spin_orbitals // 2)
    return abs(stirling_central_binomial(num_spin_orbitals) - exact) / exact


def fermionic_hamiltonian_from_integrals(one_body, two_body, constant=0.0, metadata=None,
                                         cutoff=1e-14):
    """Second-quantized Hamiltonian from spatial-orbital integrals.

    one_body is h_pq and two_body is (pq|rs) in chemists' notation over K spatial orbitals. Spin
    orbital 2p is p with spin up and 2p + 1 is p with spin down. The result is
    sum h_pq a+_p a_q + 1/2 sum (pq|rs) a+_p a+_r a_s a_q + constant over spin orbitals.
    """
    one_body = np.asarray(one_body, dtype=float)
    two_body = np.asarray(two_body, dtype=float)
    num_spatial = one_body.shape[0]
    terms = []
    if constant:
        terms.append(FermionTerm(float(constant), ()))
    for p in range(num_spatial):
        for q in range(num_spatial):
            if abs(one_body[p, q]) <= cutoff:
                continue
            for spin in (0, 1):
                terms.append(FermionTerm(
                    float(one_body[p, q]), ((2 * p + spin, True), (2 * q + spin, False))
                ))
    for p, q, r, s in np.ndindex(*two_body.shape):
        value = two_body[p, q, r, s]
        if abs(value) <= cutoff:
            continue
        for sigma in (0, 1):
            for tau in (0, 1):
                creators = (2 * p + sigma, 2 * r + tau)
                annihilators = (2 * s + tau, 2 * q + sigma)
                if creators[0] == creators[1] or annihilators[0] == annihilators[1]:
                    continue
                terms.append(FermionTerm(0.5 * float(value), (
                    (creators[0], True),
                    (creators[1], True),
                    (annihilators[0], False),
                    (annihilators[1], False),
                )))
    return FermionicHamiltonian(2 * num_spatial, tuple(terms), dict(metadata or {}))


def _require(condition, message, path, field):
    if not condition:
        raise ParseError(message, path=path, field=field)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def parse_electronic_hamiltonian(path) -> FermionicHamiltonian:
    path = pathlib.Path(path)
    data = load_json(path)
    _require(isinstance(data, dict), "top level must be an object", path, None)
    num_spin_orbitals = data.get("num_spin_orbitals")
    _require(
        isinstance(num_spin_orbitals, int) and not isinstance(num_spin_orbitals, bool)
        and num_spin_orbitals >= 1,
        "must be a positive integer", path, "num_spin_orbitals",
    )
    raw_terms = data.get("terms")
    _require(isinstance(raw_terms, list), "must be a list", path, "terms")
    terms = []
    for i, raw_term in enumerate(raw_terms):
        field = f"terms[{i}]"
        _require(isinstance(raw_term, dict), "must be an object", path, field)
        coefficient = raw_term.get("coeff")
        _require(_is_number(coefficient), "must be a number", path, f"{field}.coeff")
        _require(math.isfinite(coefficient), "must be finite", path, f"{field}.coeff")
        raw_ops = raw_term.get("ops")
        _require(isinstance(raw_ops, list), "must be a list", path, f"{field}.ops")
        ops = []
        for j, raw_op in enumerate(raw_ops):
            op_field = f"{field}.ops[{j}]"
            _require(isinstance(raw_op, dict), "must be an object", path, op_field)
            orbital = raw_op.get("orbital")
            dagger = raw_op.get("dagger")
            _require(
                isinstance(orbital, int) and not isinstance(orbital, bool),
                "must be an integer", path, f"{op_field}.orbital",
            )
            _require(
                0 <= orbital < num_spin_orbitals,
                f"orbital {orbital} out of range 0..{num_spin_orbitals - 1}",
                path, f"{op_field}.orbital",
            )
            _require(isinstance(dagger, bool), "must be a boolean", path, f"{op_field}.dagger")
            ops.append((orbital, dagger))
        terms.append(FermionTerm(float(coefficient), tuple(ops)))
    metadata = data.get("metadata", {})
    _require(isinstance(metadata, dict), "must be an object", path, "metadata")
    for key in ("system", "geometry"):
        if key in metadata:
            _require(isinstance(metadata[key], str), "must be a string", path, f"metadata.{key}")
    return FermionicHamiltonian(num_spin_orbitals, tuple(terms), dict(metadata))


def write_electronic_hamiltonian(hamiltonian: FermionicHamiltonian, path):
    data = {
        "num_spin_orbitals": hamiltonian.num_spin_orbitals,
        "terms": [
            {
                "coeff": term.coefficient,
                "ops": [{"orbital": orbital, "dagger": dagger} for orbital, dagger in term.ops],
            }
            for term in hamiltonian.terms
        ],
        "metadata": {
            "system": hamiltonian.metadata.get("system", ""),
            "geometry": hamiltonian.metadata.get("geometry", ""),
        },
    }
    with open(path, "w", encoding="utf-8") as file:
        json.dump(data, file, indent=1)


def load_restricted_hamiltonian(path, num_electrons: Optional[int]):
    """Parse, map and (if num_electrons is given) filter an electronic Hamiltonian file."""
    full = jordan_wigner_to_matrix(parse_electronic_hamiltonian(path))
    if num_electrons is None:
        return full
    return filter_by_particle_number(full, num_electrons)
