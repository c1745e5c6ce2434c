import csv
import dataclasses
import json

import pytest

from qumvqd import cli
from qumvqd.core import vqd

SMALL_RUN = {"depth": 2, "optimizer": {"restarts": 2, "max_evals": 3000}}


def write_json(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def read_rows(path):
    with open(path, encoding="utf-8", newline="") as file:
        return list(csv.reader(file))


@pytest.fixture(autouse=True)
def isolated_directory(tmp_path, monkeypatch):
    """Run every command away from the repository config.json."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("QUMVQD_THREADS", raising=False)


def test_report_matches_golden_table(tmp_path, data_dir):
    assert cli.main(["report", "--out", str(tmp_path / "out")]) == cli.EXIT_OK
    report = (tmp_path / "out" / "report.csv").read_text(encoding="utf-8")
    assert report == (data_dir / "golden" / "compression_table.csv").read_text(encoding="utf-8")
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "report"


def test_report_small_system(tmp_path):
    assert cli.main([
        "report", "--systems", "2:1", "46:26", "--cutoffs", "2", "16",
        "--out", str(tmp_path),
    ]) == cli.EXIT_OK
    rows = read_rows(tmp_path / "report.csv")
    assert rows[1] == ["2", "1", "4", "2", "2", "2", "1"]
    assert rows[-1][-1] == "11"


def test_oracle_on_h2(tmp_path, data_dir, capsys):
    fixture = data_dir / "h2_sto3g" / "h2_0.735.json"
    assert cli.main(["oracle", str(fixture), "-n", "2", "--out", str(tmp_path)]) == cli.EXIT_OK
    rows = read_rows(tmp_path / "oracle.csv")
    assert rows[0] == ["state_index", "energy_hartree"]
    assert len(rows) == 7
    assert float(rows[1][1]) == pytest.approx(-1.137306, abs=1e-6)
    assert "energy_hartree" in capsys.readouterr().out


def test_oracle_on_fragments(tmp_path, data_dir):
    fixture = data_dir / "fragments" / "synthetic_two_fragment.json"
    assert cli.main(["oracle", str(fixture), "--count", "5", "--out", str(tmp_path)]) == cli.EXIT_OK
    rows = read_rows(tmp_path / "oracle.csv")
    assert rows[0] == ["state_index", "energy_cm1"]
    assert len(rows) == 6


def test_electronic_zero_hamiltonian(tmp_path):
    hamiltonian = write_json(tmp_path / "zero.json", {"num_spin_orbitals": 2, "terms": []})
    run = write_json(tmp_path / "run.json", dict(SMALL_RUN, k=2))
    status = cli.main([
        "electronic", str(hamiltonian), "-n", "1", "--cutoff", "2",
        "--config", str(run), "--out", str(tmp_path / "out"),
    ])
    assert status == cli.EXIT_OK
    rows = read_rows(tmp_path / "out" / "electronic.csv")
    assert rows[0] == list(cli.ELECTRONIC_COLUMNS)
    assert len(rows) == 2
    assert float(rows[1][1]) == pytest.approx(0, abs=1e-12)
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["seed"] == 0
    assert str(hamiltonian) in manifest["inputs"]


def test_electronic_directory_adds_geometry_column(tmp_path):
    geometries = tmp_path / "geometries"
    geometries.mkdir()
    for name in ("a", "b"):
        write_json(geometries / f"{name}.json", {"num_spin_orbitals": 2, "terms": []})
    run = write_json(tmp_path / "run.json", dict(SMALL_RUN, k=1))
    status = cli.main([
        "electronic", str(geometries), "-n", "1", "--cutoff", "2", "--threads", "2",
        "--config", str(run), "--out", str(tmp_path / "out"),
    ])
    assert status == cli.EXIT_OK
    rows = read_rows(tmp_path / "out" / "electronic.csv")
    assert rows[0][0] == "geometry"
    assert [row[0] for row in rows[1:]] == ["a", "b"]


def test_electronic_parse_error_fails(tmp_path):
    bad = write_json(tmp_path / "bad.json", {"num_spin_orbitals": "four", "terms": []})
    status = cli.main(["electronic", str(bad), "--out", str(tmp_path / "out")])
    assert status == cli.EXIT_FAILED
    assert read_rows(tmp_path / "out" / "electronic.csv") == [list(cli.ELECTRONIC_COLUMNS)]


def test_vibrational_diagonal_fragment(tmp_path):
    """A single identity-gate fragment has the sorted diagonal as its spectrum."""
    fragment_file = write_json(tmp_path / "diagonal.json", {
        "num_modes": 1,
        "cutoff": 3,
        "fragments": [{
            "gamma": [[0.0, 0.0]], "phi": [[0.0]], "zeta": [0.0], "chi": [[0.0]],
            "diag": [5.0, 1.0, 3.0],
        }],
    })
    run = write_json(tmp_path / "run.json", dict(SMALL_RUN, k=3, depth=3, betas="auto"))
    arguments = ["vibrational", str(fragment_file), "--config", str(run)]
    assert cli.main(arguments + ["--out", str(tmp_path / "first")]) == cli.EXIT_OK
    rows = read_rows(tmp_path / "first" / "vibrational.csv")
    assert rows[0] == list(cli.VIBRATIONAL_COLUMNS)
    assert [float(row[2]) for row in rows[1:]] == pytest.approx([1.0, 3.0, 5.0])
    assert all(float(row[3]) < 1.0 for row in rows[1:])
    manifest = json.loads((tmp_path / "first" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["gate_counts"]["per_fragment"][0]["bs_total"] == 0

    assert cli.main(arguments + ["--out", str(tmp_path / "second")]) == cli.EXIT_OK
    second = (tmp_path / "second" / "vibrational.csv").read_bytes()
    assert second == (tmp_path / "first" / "vibrational.csv").read_bytes()


def test_fidelity_sweep(tmp_path):
    run = write_json(tmp_path / "run.json", {"noise": {"model": "fidelity"}})
    assert cli.main(["noise-sweep", "--config", str(run), "--out", str(tmp_path)]) == cli.EXIT_OK
    rows = read_rows(tmp_path / "noise_sweep.csv")
    assert rows[0] == list(cli.FIDELITY_COLUMNS)
    assert len(rows) == 16


def test_kraus_sweep_needs_hamiltonian(tmp_path):
    with pytest.raises(ValueError):
        cli.main(["noise-sweep", "--model", "kraus", "--out", str(tmp_path)])


def test_kraus_sweep_on_zero_hamiltonian(tmp_path):
    hamiltonian = write_json(tmp_path / "zero.json", {"num_spin_orbitals": 2, "terms": []})
    run = write_json(tmp_path / "run.json", dict(SMALL_RUN, noise={"kappa_tau_grid": [0.0, 0.1]}))
    status = cli.main([
        "noise-sweep", "--model", "kraus", "--hamiltonian", str(hamiltonian), "-n", "1",
        "--cutoff", "2", "--config", str(run), "--out", str(tmp_path / "out"),
    ])
    assert status == cli.EXIT_OK
    rows = read_rows(tmp_path / "out" / "noise_sweep.csv")
    assert rows[0] == list(cli.KRAUS_COLUMNS)
    assert [float(row[1]) for row in rows[1:]] == pytest.approx([0.0, 0.0], abs=1e-12)


def vqd_result(energies, units="hartree"):
    count = len(energies)
    return vqd.VQDResult(
        energies=tuple(energies), states=(None,) * count, parameters=(None,) * count,
        histories=((),) * count, evaluations=(0,) * count, converged=(True,) * count, seed=0,
        backend="test", units=units,
        distinct_energies=vqd.deduplicate_energies(energies, vqd.DEGENERACY_TOLERANCE[units]),
    )


def test_collapsed_deflation_fails_oracle_comparison():
    """Two VQD states on the ground level do not cover the first excited level."""
    rows, ok = cli.compare_with_oracle(vqd_result([-1.0, -1.0]), [-1.0, 0.5, 2.0], 1.6e-3)
    assert not ok
    assert [row[0] for row in rows] == [0, 1]
    assert rows[1][2] == pytest.approx(0.5)
    assert rows[1][3] == pytest.approx(1.5)


def test_split_triplet_passes_oracle_comparison():
    """A threefold level found 1e-5 apart is still one level within chemical accuracy."""
    oracle = [-1.137, -0.5246, -0.5246, -0.5246, -0.1628, 0.495]
    found = [-1.137, -0.5246, -0.5246 + 1e-5, -0.5246 + 2e-5, -0.1628, 0.495]
    rows, ok = cli.compare_with_oracle(vqd_result(found), oracle, 1.6e-3)
    assert ok
    assert len(rows) == 4
    assert rows[1][1] == pytest.approx(-0.5246 + 1e-5)
    assert rows[1][3] == pytest.approx(2e-5)


def test_too_few_oracle_levels_fail():
    rows, ok = cli.compare_with_oracle(vqd_result([0.0, 1.0, 2.0]), [0.0, 1.0], 1.6e-3)
    assert not ok
    assert len(rows) == 2


def test_unconverged_state_fails_oracle_comparison():
    result = dataclasses.replace(vqd_result([0.0, 1.0]), converged=(True, False))
    _, ok = cli.compare_with_oracle(result, [0.0, 1.0], 1.6e-3)
    assert not ok
