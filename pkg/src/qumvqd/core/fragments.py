"""Vibrational Hamiltonians given as fragments H = sum_k U_k D_k U_k^dagger.

Each U_k is a fixed gate sequence (displacements, a beam-splitter layer, squeezes, and a second
beam-splitter layer) and each D_k is diagonal in the Fock basis, so the energy of a trial state is
a sum of photon-number expectations of U_k^dagger |psi>. Fragments are produced elsewhere and
ingested from JSON; energies are in cm^-1.
"""
import dataclasses
import json
import math
import pathlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import fock
from . import gates
from .common import InputInconsistencyError, ParseError, load_json
from .fock import DenseHamiltonian, FockSpace

FRAGMENT_HERMITIAN_TOLERANCE = 1e-8
UNITS = "cm-1"


@dataclasses.dataclass(frozen=True)
class Fragment:
    gammas: np.ndarray
    phis: np.ndarray
    zetas: np.ndarray
    chis: np.ndarray
    diag: np.ndarray

    def __post_init__(self):
        gammas = np.array(self.gammas, dtype=complex).reshape(-1)
        num_modes = gammas.shape[0]
        phis = np.array(self.phis, dtype=float).reshape(num_modes, num_modes)
        zetas = np.array(self.zetas, dtype=float).reshape(num_modes)
        chis = np.array(self.chis, dtype=float).reshape(num_modes, num_modes)
        diag = np.array(self.diag, dtype=float).reshape(-1)
        for name, array in (("gamma", gammas), ("phi", phis), ("zeta", zetas),
                            ("chi", chis), ("diag", diag)):
            if not np.all(np.isfinite(array)):
                raise ValueError(f"Fragment {name} entries must be finite")
            array.setflags(write=False)
        for name, array in (("gammas", gammas), ("phis", phis), ("zetas", zetas),
                            ("chis", chis), ("diag", diag)):
            object.__setattr__(self, name, array)

    @property
    def num_modes(self):
        return self.gammas.shape[0]

    def check_space(self, space):
        if self.num_modes != space.num_modes or self.diag.shape[0] != space.total_dim:
            raise ValueError(
                f"Fragment with {self.num_modes} mode(s) and {self.diag.shape[0]} diagonal "
                f"entries does not fit {space}"
            )


@dataclasses.dataclass(frozen=True)
class FragmentSet:
    num_modes: int
    cutoff: int
    fragments: tuple
    source: str = ""

    def __post_init__(self):
        space = FockSpace(self.num_modes, self.cutoff)
        fragments = tuple(self.fragments)
        for fragment in fragments:
            fragment.check_space(space)
        object.__setattr__(self, "fragments", fragments)

    @property
    def space(self):
        return FockSpace(self.num_modes, self.cutoff)


@dataclasses.dataclass(frozen=True)
class FragmentGateCount:
    displacement: int
    squeeze: int
    bs_per_qumode: int
    bs_total: int


@dataclasses.dataclass(frozen=True)
class GateCountReport:
    num_modes: int
    depth: int
    per_fragment: tuple
    ansatz: dict
    totals: dict


def _pairs(num_modes):
    # Ascending q, then p, with p > q.
    for q in range(num_modes):
        for p in range(q + 1, num_modes):
            yield p, q


def fragment_circuit(fragment: Fragment):
    """Gates of U_k in application order: second BS layer, squeezes, first BS layer,
    displacements."""
    n = fragment.num_modes
    circuit = []
    for p, q in _pairs(n):
        circuit.append(gates.GateSpec(gates.BEAMSPLITTER, (p, q), (2 * fragment.chis[p, q],
                                                                   math.pi / 2)))
    for mode in range(n):
        circuit.append(gates.GateSpec(gates.SQUEEZE, (mode,), (fragment.zetas[mode], 0.0)))
    for p, q in _pairs(n):
        circuit.append(gates.GateSpec(gates.BEAMSPLITTER, (p, q), (2 * fragment.phis[p, q],
                                                                   math.pi / 2)))
    for mode in range(n):
        circuit.append(gates.GateSpec(gates.DISPLACEMENT, (mode,), (fragment.gammas[mode],)))
    return circuit


def fragment_unitary(fragment: Fragment, space: FockSpace) -> fock.OperatorMatrix:
    fragment.check_space(space)
    unitary = np.eye(space.total_dim, dtype=complex)
    for spec in fragment_circuit(fragment):
        local = gates.local_gate_matrix(spec, space.cutoff)
        unitary = fock.embed_operator(space, local, spec.target_modes).matrix @ unitary
    return fock.OperatorMatrix(space, unitary, unitary_flag=True)


def _diagonal_expectation(unitary_dagger, diag, amplitudes):
    rotated = unitary_dagger @ amplitudes
    return float(np.dot(diag, np.abs(rotated) ** 2))


def fragment_expectation(fragment: Fragment, state: fock.StateVector) -> float:
    """<psi|U D U^dagger|psi>, evaluated as photon-number statistics of U^dagger |psi>."""
    fragment.check_space(state.space)
    unitary = fragment_unitary(fragment, state.space)
    return _diagonal_expectation(unitary.matrix.conj().T, fragment.diag, state.amplitudes)


class FragmentEvaluator:
    """Precomputes every U_k^dagger once and evaluates the fragment sum for many states.
    Fragment terms may be computed on a thread pool; they are always added in fragment order."""

    def __init__(self, fragment_set: FragmentSet, threads=1):
        self.fragment_set = fragment_set
        self.space = fragment_set.space
        self.threads = max(1, int(threads))
        self._daggers = [
            fragment_unitary(fragment, self.space).matrix.conj().T
            for fragment in fragment_set.fragments
        ]

    def terms(self, amplitudes):
        jobs = [
            (dagger, fragment.diag)
            for dagger, fragment in zip(self._daggers, self.fragment_set.fragments)
        ]
        if self.threads == 1 or len(jobs) < 2:
            return [_diagonal_expectation(dagger, diag, amplitudes) for dagger, diag in jobs]
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            return list(executor.map(
                lambda job: _diagonal_expectation(job[0], job[1], amplitudes), jobs
            ))

    def energy(self, amplitudes):
        total = 0.0
        for term in self.terms(amplitudes):
            total += term
        return total

    def apply(self, amplitudes):
        """H |psi> as the fragment-ordered sum of U_k D_k U_k^dagger |psi>."""
        result = np.zeros(self.space.total_dim, dtype=complex)
        for dagger, fragment in zip(self._daggers, self.fragment_set.fragments):
            result += dagger.conj().T @ (fragment.diag * (dagger @ amplitudes))
        return result


def reconstruct_hamiltonian(fragment_set: FragmentSet) -> DenseHamiltonian:
    space = fragment_set.space
    total = np.zeros((space.total_dim, space.total_dim), dtype=complex)
    for fragment in fragment_set.fragments:
        unitary = fragment_unitary(fragment, space).matrix
        total += (unitary * fragment.diag) @ unitary.conj().T
    scale = max(1.0, float(np.max(np.abs(total), initial=0.0)))
    defect = float(np.max(np.abs(total - total.conj().T), initial=0.0))
    if defect > FRAGMENT_HERMITIAN_TOLERANCE * scale:
        raise InputInconsistencyError(f"Fragment sum is not Hermitian (defect {defect:.3g})")
    return DenseHamiltonian(
        matrix=(total + total.conj().T) / 2,
        basis_labels=tuple(range(space.total_dim)),
        source=fragment_set.source,
        units=UNITS,
        space=space,
    )


def count_gates(fragment_set: FragmentSet, depth) -> GateCountReport:
    """Gate counts per fragment: one displacement and one squeeze per qumode and 2(N - 1) beam
    splitters per qumode. Each beam splitter touches two qumodes, so a fragment holds N(N - 1) of
    them. A depth-D ansatz adds D gates of each type."""
    if depth < 0:
        raise ValueError(f"Depth must be nonnegative, got {depth}")
    n = fragment_set.num_modes
    per_fragment = tuple(
        FragmentGateCount(
            displacement=n,
            squeeze=n,
            bs_per_qumode=2 * (n - 1),
            bs_total=n * (n - 1),
        )
        for _ in fragment_set.fragments
    )
    ansatz = {"displacement": depth, "snap": depth, "bs": depth if n > 1 else 0}
    totals = {
        "displacement": sum(count.displacement for count in per_fragment) + ansatz["displacement"],
        "squeeze": sum(count.squeeze for count in per_fragment),
        "bs": sum(count.bs_total for count in per_fragment) + ansatz["bs"],
        "snap": ansatz["snap"],
    }
    return GateCountReport(n, depth, per_fragment, ansatz, totals)


def _matrix_field(raw, num_modes, path, field):
    if not isinstance(raw, list) or len(raw) != num_modes:
        raise ParseError(f"must be a list of {num_modes} rows", path=path, field=field)
    result = np.zeros((num_modes, num_modes))
    for p, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != num_modes:
            raise ParseError(f"row must have {num_modes} entries", path=path, field=f"{field}[{p}]")
        for q, value in enumerate(row):
            if not _is_finite_number(value):
                raise ParseError("must be a finite number", path=path, field=f"{field}[{p}][{q}]")
            result[p, q] = value
    return result


def _is_finite_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _vector_field(raw, length, path, field):
    if not isinstance(raw, list) or len(raw) != length:
        raise ParseError(f"must be a list of {length} numbers", path=path, field=field)
    for i, value in enumerate(raw):
        if not _is_finite_number(value):
            raise ParseError("must be a finite number", path=path, field=f"{field}[{i}]")
    return np.array(raw, dtype=float)


def parse_fragment_set(path) -> FragmentSet:
    path = pathlib.Path(path)
    data = load_json(path)
    if not isinstance(data, dict):
        raise ParseError("top level must be an object", path=path)
    num_modes = data.get("num_modes")
    cutoff = data.get("cutoff")
    for name, value in (("num_modes", num_modes), ("cutoff", cutoff)):
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ParseError("must be a positive integer", path=path, field=name)
    raw_fragments = data.get("fragments")
    if not isinstance(raw_fragments, list):
        raise ParseError("must be a list", path=path, field="fragments")
    fragments = []
    for k, raw in enumerate(raw_fragments):
        field = f"fragments[{k}]"
        if not isinstance(raw, dict):
            raise ParseError("must be an object", path=path, field=field)
        raw_gamma = raw.get("gamma")
        if not isinstance(raw_gamma, list) or len(raw_gamma) != num_modes:
            raise ParseError(f"must be a list of {num_modes} [re, im] pairs", path=path,
                             field=f"{field}.gamma")
        gammas = []
        for p, pair in enumerate(raw_gamma):
            if (not isinstance(pair, list) or len(pair) != 2
                    or not all(_is_finite_number(value) for value in pair)):
                raise ParseError("must be a finite [re, im] pair", path=path,
                                 field=f"{field}.gamma[{p}]")
            gammas.append(complex(pair[0], pair[1]))
        fragments.append(Fragment(
            gammas=np.array(gammas),
            phis=_matrix_field(raw.get("phi"), num_modes, path, f"{field}.phi"),
            zetas=_vector_field(raw.get("zeta"), num_modes, path, f"{field}.zeta"),
            chis=_matrix_field(raw.get("chi"), num_modes, path, f"{field}.chi"),
            diag=_vector_field(raw.get("diag"), cutoff ** num_modes, path, f"{field}.diag"),
        ))
    return FragmentSet(num_modes, cutoff, tuple(fragments), source=path.stem)


def write_fragment_set(fragment_set: FragmentSet, path):
    data = {
        "num_modes": fragment_set.num_modes,
        "cutoff": fragment_set.cutoff,
        "fragments": [
            {
                "gamma": [[float(g.real), float(g.imag)] for g in fragment.gammas],
                "phi": fragment.phis.tolist(),
                "zeta": fragment.zetas.tolist(),
                "chi": fragment.chis.tolist(),
                "diag": fragment.diag.tolist(),
            }
            for fragment in fragment_set.fragments
        ],
    }
    with open(path, "w", encoding="utf-8") as file:
        json.dump(data, file, indent=1)


def synthetic_fragment_set(num_modes, cutoff, num_fragments, rng, frequencies=None,
                           parameter_scale=0.05, coupling_scale=5.0):
    """Random fragment set in cm^-1 for benchmarks: the first fragment is an anharmonic ladder,
    the others are small couplings behind random near-identity gate sequences."""
    space = FockSpace(num_modes, cutoff)
    if frequencies is None:
        frequencies = [1300.0 / (mode + 1) for mode in range(num_modes)]
    occupations = np.array([space.occupations(i) for i in range(space.total_dim)], dtype=float)
    ladder = occupations @ np.asarray(frequencies) - 4.0 * np.sum(occupations ** 2, axis=1)
    ladder += 0.5 * float(np.sum(frequencies))
    fragments = []
    for k in range(num_fragments):
        if k == 0:
            diag = ladder
        else:
            diag = coupling_scale * rng.normal(size=space.total_dim) * np.sqrt(
                1 + np.sum(occupations, axis=1)
            )
        fragments.append(Fragment(
            gammas=parameter_scale * (rng.uniform(-1, 1, num_modes)
                                      + 1j * rng.uniform(-1, 1, num_modes)),
            phis=np.tril(parameter_scale * rng.uniform(-1, 1, (num_modes, num_modes)), -1),
            zetas=parameter_scale * rng.uniform(-1, 1, num_modes) * (k > 0),
            chis=np.tril(parameter_scale * rng.uniform(-1, 1, (num_modes, num_modes)), -1),
            diag=diag,
        ))
    return FragmentSet(num_modes, cutoff, tuple(fragments), source="synthetic")
