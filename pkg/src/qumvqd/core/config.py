"""Run configuration, merged in layers: built-in defaults, the "defaults" block of the repository
config.json, its per-system block, an explicit run file, then command-line overrides."""
import copy
import dataclasses
import logging
import os
import pathlib

from .common import ParseError, load_json
from .vqd import OptimizerConfig

logger = logging.getLogger(__name__)

THREADS_ENVIRONMENT_VARIABLE = "QUMVQD_THREADS"
ROOT_CONFIG = pathlib.Path("config.json")

BUILTIN_DEFAULTS = {
    "depth": 20,
    "betas": 3.0,
    "k": 4,
    "seed": 0,
    "cutoff": 16,
    "num_electrons": None,
    "threshold": None,
    "optimizer": {
        "restarts": 5,
        "max_evals": 20_000,
        "tol": 1e-9,
        "patience": 50,
        "polish": True,
        "fd_step": 1e-5,
        "init_scale": 0.1,
        "simplex_fraction": 0.5,
    },
    "noise": {
        "model": "kraus",
        "kappa_tau_grid": [1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
        "l_max": 8,
        "error_prob_grid": [1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
        "gate_counts": [26, 900, 7000],
        "reference_energy": 2532.06,
        "threshold": None,
    },
}

RUN_KEYS = {"depth", "betas", "k", "seed", "cutoff", "num_electrons", "threshold", "optimizer",
            "noise"}


@dataclasses.dataclass(frozen=True)
class NoiseConfig:
    model: str = "kraus"
    kappa_tau_grid: tuple = ()
    l_max: int = 8
    error_prob_grid: tuple = ()
    gate_counts: tuple = ()
    reference_energy: float = 2532.06
    threshold: float = None

    def __post_init__(self):
        if self.model not in ("kraus", "fidelity"):
            raise ValueError(f"Noise model must be 'kraus' or 'fidelity', got {self.model!r}")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    depth: int = 20
    betas: object = 3.0
    k: int = 4
    seed: int = 0
    cutoff: int = 16
    num_electrons: int = None
    threshold: float = None
    optimizer: OptimizerConfig = OptimizerConfig()
    noise: NoiseConfig = NoiseConfig()
    raw: dict = dataclasses.field(default_factory=dict, compare=False)


def merge(base, override):
    """Recursive dict update; nested dicts merge, everything else replaces."""
    result = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = merge(result[key], value)
        else:
            result[key] = copy.deepcopy(value)
    return result


def _check_keys(layer, source):
    for key in layer:
        if key not in RUN_KEYS:
            raise ParseError(f"unknown configuration key {key!r}", path=source, field=key)


def load_layers(path=None, system=None, root_config=ROOT_CONFIG):
    config = copy.deepcopy(BUILTIN_DEFAULTS)
    root_config = pathlib.Path(root_config) if root_config is not None else None
    if root_config is not None and root_config.exists():
        full_config = load_json(root_config)
        defaults = full_config.get("defaults", {})
        _check_keys(defaults, root_config)
        config = merge(config, defaults)
        if system is not None:
            systems = full_config.get("systems", {})
            if system not in systems:
                raise ValueError(f"No system {system!r} in {root_config}")
            _check_keys(systems[system], root_config)
            config = merge(config, systems[system])
    elif system is not None:
        raise ValueError(f"System {system!r} requested but {root_config} does not exist")
    if path is not None:
        layer = load_json(path)
        if not isinstance(layer, dict):
            raise ParseError("top level must be an object", path=path)
        _check_keys(layer, path)
        config = merge(config, layer)
    return config


def _typed(raw, source):
    optimizer = raw["optimizer"]
    unknown = set(optimizer) - {field.name for field in dataclasses.fields(OptimizerConfig)}
    if unknown:
        field = sorted(unknown)[0]
        raise ParseError(f"unknown optimizer key {field!r}", path=source, field=f"optimizer.{field}")
    noise = dict(raw["noise"])
    for key in ("kappa_tau_grid", "error_prob_grid", "gate_counts"):
        noise[key] = tuple(noise[key])
    betas = raw["betas"]
    if isinstance(betas, list):
        betas = tuple(float(beta) for beta in betas)
    try:
        return RunConfig(
            depth=int(raw["depth"]),
            betas=betas,
            k=int(raw["k"]),
            seed=int(raw["seed"]),
            cutoff=int(raw["cutoff"]),
            num_electrons=raw["num_electrons"],
            threshold=raw["threshold"],
            optimizer=OptimizerConfig(**optimizer),
            noise=NoiseConfig(**noise),
            raw=raw,
        )
    except TypeError as error:
        raise ParseError(str(error), path=source) from error


def load_run_config(path=None, system=None, overrides=None, root_config=ROOT_CONFIG) -> RunConfig:
    raw = load_layers(path, system, root_config)
    if overrides:
        raw = merge(raw, {key: value for key, value in overrides.items() if value is not None})
    config = _typed(raw, path)
    logger.debug("Run configuration: %s", raw)
    return config


def resolve_thread_count(cli_threads=None, environ=None):
    """--threads wins, then QUMVQD_THREADS, then a single thread."""
    if cli_threads is not None:
        threads = cli_threads
    else:
        environ = os.environ if environ is None else environ
        value = environ.get(THREADS_ENVIRONMENT_VARIABLE)
        if value is None or value == "":
            return 1
        try:
            threads = int(value)
        except ValueError as error:
            raise ValueError(
                f"{THREADS_ENVIRONMENT_VARIABLE} must be an integer, got {value!r}"
            ) from error
    if threads < 1:
        raise ValueError(f"Thread count must be positive, got {threads}")
    return threads
