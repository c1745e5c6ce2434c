"""Generate H2/STO-3G Hamiltonian files over a range of bond lengths.

Integrals come from the closed-form minimal-basis solution in h2_sto3g.py by default.
--method pyscf runs a restricted Hartree-Fock calculation instead and needs PySCF
(pdm install -G fixtures). Both write the electronic Hamiltonian JSON format read by
`qumvqd electronic`.
"""
import argparse
import logging
import pathlib

import numpy as np

import h2_sto3g
from qumvqd.core import symmetry

DEFAULT_BOND_LENGTHS = (0.4, 0.5, 0.6, 0.735, 0.9, 1.1, 1.4, 1.8, 2.2, 2.5)


def pyscf_h2_integrals(bond_length):
    try:
        from pyscf import ao2mo, gto, scf
    except ImportError:
        raise ImportError("PySCF is required for --method pyscf")
    mol = gto.Mole()
    mol.atom = [("H", (0.0, 0.0, 0.0)), ("H", (0.0, 0.0, bond_length))]
    mol.basis = "sto-3g"
    mol.unit = "Angstrom"
    mol.build()
    mf = scf.RHF(mol)
    mf.kernel()
    one_body = mf.mo_coeff.T @ mf.get_hcore() @ mf.mo_coeff
    two_body = ao2mo.restore(1, ao2mo.kernel(mol, mf.mo_coeff), mol.nao)
    return one_body, np.asarray(two_body), mol.energy_nuc()


METHODS = {
    "closed-form": h2_sto3g.h2_sto3g_integrals,
    "pyscf": pyscf_h2_integrals,
}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument(
        "-r",
        "--bond-lengths",
        type=float,
        nargs="+",
        default=DEFAULT_BOND_LENGTHS,
        help="Bond lengths in angstrom."
    )
    parser.add_argument(
        "-m",
        "--method",
        choices=sorted(METHODS),
        default="closed-form",
        help="Where the molecular-orbital integrals come from."
    )
    parser.add_argument("out", type=str, help="Output directory.")
    args = parser.parse_args()

    out_dir = pathlib.Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for bond_length in args.bond_lengths:
        one_body, two_body, constant = METHODS[args.method](bond_length)
        hamiltonian = symmetry.fermionic_hamiltonian_from_integrals(
            one_body, two_body, constant,
            metadata={"system": "H2/STO-3G", "geometry": f"r={bond_length}"},
        )
        path = out_dir / f"h2_{bond_length}.json"
        symmetry.write_electronic_hamiltonian(hamiltonian, path)
        logging.info(f"Wrote {path} with {len(hamiltonian.terms)} terms.")


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    main()
