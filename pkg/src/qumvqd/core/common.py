import csv
import hashlib
import io
import json
import pathlib

VERSION = "0.1.0"

# Chemical accuracy, 1 kcal/mol in hartree.
CHEMICAL_ACCURACY = 1.6e-3
# Spectroscopic accuracy in cm^-1.
SPECTROSCOPIC_ACCURACY = 1.0

SIGNIFICANT_DIGITS = 12


class NumericalConsistencyError(ArithmeticError):
    pass


class CapacityError(ValueError):
    pass


class InputInconsistencyError(ValueError):
    pass


class SymmetryViolationError(ValueError):
    pass


class TruncationError(ValueError):
    pass


class ParseError(ValueError):
    """Raised when an input file does not match its schema. Carries the file path, the offending
    field (as a dotted path such as "terms[3].ops[0].orbital") and, for JSON syntax errors, the
    line number."""

    def __init__(self, message, path=None, field=None, line=None):
        self.path = path
        self.field = field
        self.line = line
        location = []
        if path is not None:
            location.append(str(path))
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        prefix = ", ".join(location)
        super().__init__(f"{prefix}: {message}" if prefix else message)


def load_json(path):
    """Load a UTF-8 JSON file, converting syntax errors into ParseError with line context."""
    path = pathlib.Path(path)
    with open(path, encoding="utf-8") as file:
        text = file.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as error:
        raise ParseError(error.msg, path=path, line=error.lineno) from error


def format_number(value):
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    return f"{value:.{SIGNIFICANT_DIGITS}g}"


def format_csv(header, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([
            format_number(value) if isinstance(value, (int, float)) and not isinstance(value, bool)
            else value
            for value in row
        ])
    return buffer.getvalue()


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as file:
        file.write(format_csv(header, rows))


def hash_bytes(data: bytes):
    return hashlib.sha256(data).hexdigest()


def hash_file(path):
    with open(path, "rb") as file:
        return hash_bytes(file.read())


def hash_config(config):
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hash_bytes(canonical.encode("utf-8"))


def write_manifest_file(manifest, out_dir):
    """Write a RunManifest dict as manifest.json into out_dir, overwriting any previous run."""
    with open(pathlib.Path(out_dir) / "manifest.json", "w", encoding="utf-8") as file:
        json.dump(manifest, file, indent=2, sort_keys=True)
