import pathlib

import numpy as np
import pytest

import h2_sto3g
from qumvqd.core import fock
from qumvqd.core import symmetry

FIXTURE_DIR = pathlib.Path(__file__).resolve().parent.parent / "data" / "h2_sto3g"

# RHF integrals of H2/STO-3G at 0.735 angstrom from PySCF.
PYSCF_H2_0735 = {
    "h00": -1.2563390730032498,
    "h11": -0.4718960072811421,
    "J00": 0.6757101548035165,
    "J11": 0.6985737227320183,
    "J01": 0.6645817302552969,
    "K": 0.18093119978423156,
    "nuclear": 0.7199689944489797,
}
INTEGRAL_EPSILON = 1e-10
BOND_LENGTHS = (0.4, 0.5, 0.6, 0.735, 0.9, 1.1, 1.4, 1.8, 2.2, 2.5)


def test_integrals_match_pyscf():
    one_body, two_body, nuclear = h2_sto3g.h2_sto3g_integrals(0.735)
    assert one_body[0, 0] == pytest.approx(PYSCF_H2_0735["h00"], abs=INTEGRAL_EPSILON)
    assert one_body[1, 1] == pytest.approx(PYSCF_H2_0735["h11"], abs=INTEGRAL_EPSILON)
    assert one_body[0, 1] == pytest.approx(0, abs=INTEGRAL_EPSILON)
    assert two_body[0, 0, 0, 0] == pytest.approx(PYSCF_H2_0735["J00"], abs=INTEGRAL_EPSILON)
    assert two_body[1, 1, 1, 1] == pytest.approx(PYSCF_H2_0735["J11"], abs=INTEGRAL_EPSILON)
    assert two_body[0, 0, 1, 1] == pytest.approx(PYSCF_H2_0735["J01"], abs=INTEGRAL_EPSILON)
    assert two_body[0, 1, 0, 1] == pytest.approx(PYSCF_H2_0735["K"], abs=INTEGRAL_EPSILON)
    assert nuclear == pytest.approx(PYSCF_H2_0735["nuclear"], abs=1e-14)


@pytest.mark.parametrize("bond_length", [0.5, 1.4])
def test_integral_symmetries(bond_length):
    _, two_body, _ = h2_sto3g.h2_sto3g_integrals(bond_length)
    assert np.allclose(two_body, two_body.transpose(1, 0, 2, 3), atol=1e-14)
    assert np.allclose(two_body, two_body.transpose(2, 3, 0, 1), atol=1e-14)
    # Parity forbids an odd number of sigma_u indices.
    assert two_body[0, 0, 0, 1] == pytest.approx(0, abs=1e-14)
    assert two_body[1, 1, 1, 0] == pytest.approx(0, abs=1e-14)


@pytest.mark.parametrize("bond_length", BOND_LENGTHS)
def test_committed_fixture_matches_integrals(bond_length):
    built = symmetry.fermionic_hamiltonian_from_integrals(
        *h2_sto3g.h2_sto3g_integrals(bond_length)
    )
    fixture = symmetry.parse_electronic_hamiltonian(
        FIXTURE_DIR / f"h2_{bond_length}.json"
    )
    assert fixture.metadata["geometry"] == f"r={bond_length}"
    assert np.allclose(
        symmetry.jordan_wigner_to_matrix(built).matrix,
        symmetry.jordan_wigner_to_matrix(fixture).matrix,
        atol=1e-12,
    )


def test_dissociation_curve_has_a_minimum():
    grounds = [
        fock.eigenvalues(
            symmetry.load_restricted_hamiltonian(FIXTURE_DIR / f"h2_{r}.json", 2)
        )[0]
        for r in BOND_LENGTHS
    ]
    lowest = int(np.argmin(grounds))
    assert BOND_LENGTHS[lowest] == 0.735
    assert grounds[lowest] == pytest.approx(-1.137306, abs=1e-6)
    assert grounds[0] == pytest.approx(-0.914150, abs=1e-6)
    assert grounds[-1] == pytest.approx(-0.936055, abs=1e-6)


def test_bond_length_must_be_positive():
    with pytest.raises(ValueError):
        h2_sto3g.h2_sto3g_integrals(0.0)
