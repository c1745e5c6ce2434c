"""Command-line entry point.

Every subcommand writes one CSV and a manifest.json into --out. The electronic and vibrational
runs compare each VQD energy against exact diagonalization of the same Hamiltonian and exit with
status 1 when a state fails to converge or misses its accuracy threshold.
"""
import argparse
import dataclasses
import logging
import pathlib
import sys
import time

import numpy as np

from .core import batch
from .core import fock
from .core import fragments
from .core import noise
from .core import symmetry
from .core import vqd
from .core.common import (
    CHEMICAL_ACCURACY,
    SPECTROSCOPIC_ACCURACY,
    VERSION,
    CapacityError,
    InputInconsistencyError,
    NumericalConsistencyError,
    ParseError,
    SymmetryViolationError,
    TruncationError,
    format_csv,
    hash_config,
    hash_file,
    load_json,
    write_csv,
    write_manifest_file,
)
from .core.config import load_run_config, resolve_thread_count

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1

# Input problems that fail one geometry or file without aborting the rest of a run.
INPUT_ERRORS = (
    ParseError,
    SymmetryViolationError,
    InputInconsistencyError,
    CapacityError,
    TruncationError,
    NumericalConsistencyError,
)

ELECTRONIC_COLUMNS = (
    "state_index", "vqd_energy_hartree", "oracle_energy_hartree", "abs_error_hartree"
)
VIBRATIONAL_COLUMNS = ("state_index", "vqd_energy_cm1", "oracle_energy_cm1", "abs_error_cm1")
KRAUS_COLUMNS = (
    "kappa_tau", "energy_hartree", "abs_error_hartree", "exceeds_threshold", "threshold_crossing"
)
FIDELITY_COLUMNS = (
    "gate_count", "error_prob", "energy_cm1", "abs_error_cm1", "exceeds_threshold",
    "threshold_crossing",
)


@dataclasses.dataclass
class PointOutcome:
    """VQD result of one Hamiltonian compared against its oracle."""

    label: str
    rows: list
    ok: bool
    summaries: list
    error: str = None
    extra: dict = None


def compare_with_oracle(result: vqd.VQDResult, oracle_energies, threshold):
    """Rows of (state_index, vqd, oracle, abs_error), one per distinct oracle level.

    The k sorted VQD energies meet the k lowest oracle eigenvalues counted with multiplicity. A
    degenerate oracle level gives one row holding the mean of its VQD energies and the largest
    error among them, so a collapsed deflation or a split multiplet is judged state by state.
    """
    tolerance = vqd.DEGENERACY_TOLERANCE.get(result.units, 1e-6)
    found = sorted(result.energies)
    exact = sorted(float(energy) for energy in oracle_energies)[:len(found)]
    ok = result.all_converged
    if len(exact) < len(found):
        logger.warning("Oracle has %d levels for %d VQD states", len(exact), len(found))
        ok = False
    rows = []
    start = 0
    while start < len(exact):
        stop = start + 1
        while stop < len(exact) and exact[stop] - exact[start] <= tolerance:
            stop += 1
        error = max(abs(f - e) for f, e in zip(found[start:stop], exact[start:stop]))
        level = len(rows)
        if error >= threshold:
            logger.warning("Level %d misses the threshold: VQD %s against %.12g, error %.3g",
                           level, found[start:stop], exact[start], error)
            ok = False
        rows.append((level, float(np.mean(found[start:stop])), float(np.mean(exact[start:stop])),
                     error))
        start = stop
    return rows, ok


def _electronic_point(path, config, threads):
    label = path.stem
    try:
        restricted = symmetry.load_restricted_hamiltonian(path, config.num_electrons)
        if config.k > restricted.dimension:
            raise InputInconsistencyError(
                f"k = {config.k} exceeds the {restricted.dimension} states of the sector"
            )
        backend = vqd.DenseBackend.from_hamiltonian(restricted, config.cutoff)
        ansatz = vqd.AnsatzSpec(backend.space, config.depth)
        logger.info("%s: dimension %d on %d qumode(s) at cutoff %d, %d parameters",
                    label, restricted.dimension, backend.space.num_modes, config.cutoff,
                    ansatz.num_parameters)
        result = vqd.run_vqd(ansatz, backend, config.k, config.betas, config.optimizer,
                             config.seed, threads)
        oracle = fock.eigenvalues(restricted)
    except INPUT_ERRORS as error:
        logger.error("%s: %s", label, error)
        return PointOutcome(label, [], False, [], error=str(error))
    threshold = config.threshold if config.threshold is not None else CHEMICAL_ACCURACY
    rows, ok = compare_with_oracle(result, oracle, threshold)
    return PointOutcome(label, rows, ok, result.convergence_summaries())


def _input_paths(path):
    path = pathlib.Path(path)
    if path.is_dir():
        paths = sorted(path.glob("*.json"))
        if not paths:
            raise ValueError(f"No Hamiltonian files in {path}")
        return paths, True
    return [path], False


def _manifest(command, config, inputs, seed, started, states, extra=None):
    manifest = {
        "command": command,
        "config_hash": hash_config(config.raw),
        "inputs": {str(path): hash_file(path) for path in inputs},
        "seed": seed,
        "version": VERSION,
        "wall_time_seconds": time.perf_counter() - started,
        "states": states,
    }
    if extra:
        manifest.update(extra)
    return manifest


def cmd_electronic(args, config, threads, out_dir):
    started = time.perf_counter()
    paths, multiple = _input_paths(args.hamiltonian)
    if multiple:
        def run_point(path):
            batch.write_progress(f"Running VQD on geometry '{path.stem}'...")
            return _electronic_point(path, config, 1)

        outcomes = batch.run_batch(run_point, paths, threads=threads, description="Geometries")
    else:
        outcomes = [_electronic_point(paths[0], config, threads)]
    header = (("geometry",) if multiple else ()) + ELECTRONIC_COLUMNS
    rows = []
    for outcome in outcomes:
        prefix = (outcome.label,) if multiple else ()
        rows.extend(prefix + row for row in outcome.rows)
    write_csv(out_dir / "electronic.csv", header, rows)
    states = [
        {"geometry": outcome.label, "states": outcome.summaries, "error": outcome.error}
        for outcome in outcomes
    ]
    write_manifest_file(
        _manifest("electronic", config, paths, config.seed, started, states), out_dir
    )
    return all(outcome.ok for outcome in outcomes)


def cmd_vibrational(args, config, threads, out_dir):
    started = time.perf_counter()
    path = pathlib.Path(args.fragments)
    extra = {}
    try:
        fragment_set = fragments.parse_fragment_set(path)
        dense = fragments.reconstruct_hamiltonian(fragment_set)
        backend = vqd.FragmentBackend(fragment_set, threads=threads)
        ansatz = vqd.AnsatzSpec(backend.space, config.depth)
        report = fragments.count_gates(fragment_set, config.depth)
        extra["gate_counts"] = dataclasses.asdict(report)
        logger.info("Gate counts: %s", report.totals)
        result = vqd.run_vqd(ansatz, backend, config.k, config.betas, config.optimizer,
                             config.seed, 1)
        oracle = fock.eigenvalues(dense)
    except INPUT_ERRORS as error:
        logger.error("%s: %s", path, error)
        write_csv(out_dir / "vibrational.csv", VIBRATIONAL_COLUMNS, [])
        write_manifest_file(
            _manifest("vibrational", config, [path], config.seed, started, [],
                      {"error": str(error)}),
            out_dir,
        )
        return False
    threshold = config.threshold if config.threshold is not None else SPECTROSCOPIC_ACCURACY
    rows, ok = compare_with_oracle(result, oracle, threshold)
    write_csv(out_dir / "vibrational.csv", VIBRATIONAL_COLUMNS, rows)
    write_manifest_file(
        _manifest("vibrational", config, [path], config.seed, started,
                  result.convergence_summaries(), extra),
        out_dir,
    )
    return ok


def _converged_circuit(path, config, threads):
    """Ground-state VQE circuit of an electronic Hamiltonian, with its embedded Hamiltonian and
    exact ground energy."""
    restricted = symmetry.load_restricted_hamiltonian(path, config.num_electrons)
    backend = vqd.DenseBackend.from_hamiltonian(restricted, config.cutoff)
    ansatz = vqd.AnsatzSpec(backend.space, config.depth)
    result = vqd.run_vqd(ansatz, backend, 1, config.betas, config.optimizer, config.seed, threads)
    circuit = vqd.ansatz_circuit(ansatz, result.parameters[0])
    reference = float(fock.eigenvalues(restricted)[0])
    return circuit, backend.hamiltonian, reference, result


def cmd_noise_sweep(args, config, threads, out_dir):
    started = time.perf_counter()
    settings = config.noise
    if args.model is not None:
        settings = dataclasses.replace(settings, model=args.model)
    if settings.model == "fidelity":
        threshold = settings.threshold if settings.threshold is not None else SPECTROSCOPIC_ACCURACY
        sweep = noise.fidelity_sweep(settings.error_prob_grid, settings.gate_counts,
                                     settings.reference_energy, threshold)
        rows = [
            (row.gate_count, row.parameter, row.energy, row.abs_error,
             int(row.exceeds_threshold), int(row.crossing))
            for row in sweep
        ]
        write_csv(out_dir / "noise_sweep.csv", FIDELITY_COLUMNS, rows)
        write_manifest_file(
            _manifest("noise-sweep", config, [], config.seed, started, [],
                      {"model": "fidelity"}),
            out_dir,
        )
        return True
    if args.hamiltonian is None:
        raise ValueError("The kraus model needs --hamiltonian to build its circuit")
    path = pathlib.Path(args.hamiltonian)
    try:
        circuit, hamiltonian, reference, result = _converged_circuit(path, config, threads)
    except INPUT_ERRORS as error:
        logger.error("%s: %s", path, error)
        write_csv(out_dir / "noise_sweep.csv", KRAUS_COLUMNS, [])
        return False
    threshold = settings.threshold if settings.threshold is not None else CHEMICAL_ACCURACY
    sweep = noise.kraus_sweep(circuit, hamiltonian, settings.kappa_tau_grid, reference,
                              settings.l_max, threshold, threads=threads, progress_bar=True)
    rows = [
        (row.parameter, row.energy, row.abs_error, int(row.exceeds_threshold), int(row.crossing))
        for row in sweep
    ]
    write_csv(out_dir / "noise_sweep.csv", KRAUS_COLUMNS, rows)
    write_manifest_file(
        _manifest("noise-sweep", config, [path], config.seed, started,
                  result.convergence_summaries(),
                  {"model": "kraus", "reference_energy": reference,
                   "noiseless_energy": result.energies[0]}),
        out_dir,
    )
    return result.all_converged


def _parse_system(text):
    try:
        num_spin_orbitals, num_electrons = (int(part) for part in text.split(":"))
    except ValueError as error:
        raise argparse.ArgumentTypeError(f"Expected M:n_e, got {text!r}") from error
    return num_spin_orbitals, num_electrons


def cmd_report(args, config, threads, out_dir):
    started = time.perf_counter()
    systems = args.systems or list(symmetry.REFERENCE_SYSTEMS)
    cutoffs = args.cutoffs or [config.cutoff]
    reports = [
        symmetry.compression_report(num_spin_orbitals, num_electrons, cutoff)
        for cutoff in cutoffs
        for num_spin_orbitals, num_electrons in systems
    ]
    symmetry.write_compression_csv(reports, out_dir / "report.csv")
    write_manifest_file(
        _manifest("report", config, [], config.seed, started, [], {"cutoffs": list(cutoffs)}),
        out_dir,
    )
    return True


def _oracle_hamiltonian(path, config):
    data = load_json(path)
    if isinstance(data, dict) and "fragments" in data:
        return fragments.reconstruct_hamiltonian(fragments.parse_fragment_set(path))
    return symmetry.load_restricted_hamiltonian(path, config.num_electrons)


def cmd_oracle(args, config, threads, out_dir):
    started = time.perf_counter()
    path = pathlib.Path(args.input)
    try:
        hamiltonian = _oracle_hamiltonian(path, config)
    except INPUT_ERRORS as error:
        logger.error("%s: %s", path, error)
        return False
    energies = fock.eigenvalues(hamiltonian)
    if args.count is not None:
        energies = energies[:args.count]
    units = "cm1" if hamiltonian.units == "cm-1" else hamiltonian.units
    header = ("state_index", f"energy_{units}")
    rows = [(i, float(energy)) for i, energy in enumerate(energies)]
    write_csv(out_dir / "oracle.csv", header, rows)
    sys.stdout.write(format_csv(header, rows))
    write_manifest_file(
        _manifest("oracle", config, [path], config.seed, started, [],
                  {"dimension": hamiltonian.dimension}),
        out_dir,
    )
    return True


COMMANDS = {
    "electronic": cmd_electronic,
    "vibrational": cmd_vibrational,
    "noise-sweep": cmd_noise_sweep,
    "report": cmd_report,
    "oracle": cmd_oracle,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Run configuration JSON, layered over config.json.")
    common.add_argument("--system", help="Per-system block of config.json to apply.")
    common.add_argument("--seed", type=int, help="Master RNG seed.")
    common.add_argument("--out", default="out", help="Output directory.")
    common.add_argument("--threads", type=int, help="Worker threads (default $QUMVQD_THREADS or 1).")
    common.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level.")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("-k", type=int, help="Number of VQD states.")
    run.add_argument("-D", "--depth", type=int, help="Number of ansatz layers.")
    run.add_argument("-d", "--cutoff", type=int, help="Fock cutoff per qumode.")

    parser = argparse.ArgumentParser("qumvqd")
    subparsers = parser.add_subparsers(dest="command", required=True)

    electronic = subparsers.add_parser(
        "electronic", parents=[common, run], help="VQD on an electronic Hamiltonian."
    )
    electronic.add_argument("hamiltonian", help="Hamiltonian JSON file or directory of them.")
    electronic.add_argument("-n", "--electrons", type=int, help="Electron count of the sector.")

    vibrational = subparsers.add_parser(
        "vibrational", parents=[common, run], help="VQD on a fragmented vibrational Hamiltonian."
    )
    vibrational.add_argument("fragments", help="Fragment set JSON file.")

    sweep = subparsers.add_parser(
        "noise-sweep", parents=[common, run], help="Energy error against hardware noise."
    )
    sweep.add_argument("--model", choices=("kraus", "fidelity"), help="Noise model.")
    sweep.add_argument("--hamiltonian", help="Electronic Hamiltonian whose circuit is swept.")
    sweep.add_argument("-n", "--electrons", type=int, help="Electron count of the sector.")

    report = subparsers.add_parser(
        "report", parents=[common], help="Particle-number compression table."
    )
    report.add_argument("--systems", nargs="+", type=_parse_system, help="Systems as M:n_e.")
    report.add_argument("--cutoffs", nargs="+", type=int, help="Fock cutoffs.")

    oracle = subparsers.add_parser(
        "oracle", parents=[common], help="Exact spectrum of a Hamiltonian or fragment set."
    )
    oracle.add_argument("input", help="Electronic Hamiltonian or fragment set JSON.")
    oracle.add_argument("-n", "--electrons", type=int, help="Electron count of the sector.")
    oracle.add_argument("--count", type=int, help="Only the lowest COUNT eigenvalues.")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    overrides = {
        "seed": args.seed,
        "k": getattr(args, "k", None),
        "depth": getattr(args, "depth", None),
        "cutoff": getattr(args, "cutoff", None),
        "num_electrons": getattr(args, "electrons", None),
    }
    config = load_run_config(args.config, args.system, overrides)
    threads = resolve_thread_count(args.threads)
    out_dir = pathlib.Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ok = COMMANDS[args.command](args, config, threads, out_dir)
    if not ok:
        logger.error("%s run did not meet its convergence or accuracy requirements", args.command)
    return EXIT_OK if ok else EXIT_FAILED


def _subcommand_main(command):
    sys.exit(main([command, *sys.argv[1:]]))


def electronic_main():
    _subcommand_main("electronic")


def vibrational_main():
    _subcommand_main("vibrational")


def noise_sweep_main():
    _subcommand_main("noise-sweep")


def report_main():
    _subcommand_main("report")


def oracle_main():
    _subcommand_main("oracle")


if __name__ == "__main__":
    sys.exit(main())
