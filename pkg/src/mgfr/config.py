"""Layered run configuration: defaults < TOML file < ``MGFR_SEED`` < command-line flags.

Every key lives in a section and can be overridden with ``--section.key VALUE``
where ``VALUE`` is parsed as a TOML literal (``0.5``, ``[50, 100]``, ``true``,
``"GFR"``); anything that is not valid TOML is kept as a bare string.
"""
import os
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from ._errors import InvalidConfiguration, InvalidInput
from .covariance import ThetaConfig
from .evaluation import SweepConfig
from .metric_spaces import SolverConfig
from .regression import EstimatorKind
from .simulation import SimConfig

SEED_ENV = "MGFR_SEED"

_NUM = (int, float)

# section -> key -> (default, accepted types); ``None`` defaults mean "unset"
SCHEMA = {
    "simulation": {
        "n": (200, int),
        "m": (5, int),
        "q": (5, int),
        "mu_x": (None, list),
        "beta0": (1.0, _NUM),
        "delta": (0.5, _NUM),
        "v1": (0.1, _NUM),
        "seed": (0, int),
        "M": (100, int),
        "spherical": (False, bool),
        "design_seed": (None, int),
        "metric": ("quantile", str),
        "noise_sigma": (0.0, _NUM),
        "collinear_pairs": ([], list),
        "collinear_jitter": (1e-3, _NUM),
    },
    "sweep": {
        "n_grid": ([50, 100, 200, 400, 800], list),
        "replicates": (50, int),
        "estimators": (["GFR", "MGFR", "DMGFR"], list),
        "n_jobs": (1, int),
        "held_out": (False, bool),
    },
    "solver": {
        "eps_tol": (1e-8, _NUM),
        "k_max": (500, int),
        "init": ("weighted-average", str),
    },
    "theta": {
        "tau": (None, _NUM),
        "eps": (None, _NUM),
    },
    "rate": {
        "estimator": ("MGFR", str),
        "band": ([-1.4, -0.6], list),
        "min_replicates": (10, int),
    },
    "fit": {
        "dataset": ("", str),
        "queries": ("", str),
        "estimator": ("MGFR", str),
    },
    "output": {
        "dir": ("out", str),
        "log_axes": (False, bool),
    },
}


def parse_literal(text):
    """Parse a flag value as a TOML literal, falling back to the raw string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _bad(key, why):
    leaf = key.rsplit(".", 1)[-1]
    why = str(why).removeprefix(f"invalid value for {leaf}: ")
    raise InvalidConfiguration(f"invalid value for {key}: {why}", key=key)


def _check_type(section, key, value):
    default, types = SCHEMA[section][key]
    name = f"{section}.{key}"
    # bool is an int subclass; keep the two apart
    if isinstance(value, bool) and types is not bool:
        _bad(name, f"expected {_type_name(types)}, got a boolean")
    if not isinstance(value, types):
        _bad(name, f"expected {_type_name(types)}, got {type(value).__name__} {value!r}")
    if types is _NUM:
        return float(value)
    return value


def _type_name(types):
    if types is _NUM:
        return "a number"
    return {int: "an integer", bool: "a boolean", str: "a string", list: "an array"}[types]


def load_file(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise InvalidConfiguration(f"config file not found: {path}", key="config") from None
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfiguration(f"cannot parse config file {path}: {exc}", key="config") from None


def merge_layers(file_data=None, overrides=None, environ=None):
    """Resolve the raw key/value table for every section.

    ``overrides`` maps ``"section.key"`` to already-parsed values.
    """
    environ = os.environ if environ is None else environ
    raw = {s: {k: v[0] for k, v in keys.items()} for s, keys in SCHEMA.items()}
    for section, table in (file_data or {}).items():
        if section not in SCHEMA:
            _bad(section, "unknown config section")
        if not isinstance(table, dict):
            _bad(section, "must be a table")
        for key, value in table.items():
            if key not in SCHEMA[section]:
                _bad(f"{section}.{key}", "unknown key")
            raw[section][key] = _check_type(section, key, value)
    if environ.get(SEED_ENV, "") != "":
        try:
            raw["simulation"]["seed"] = int(environ[SEED_ENV])
        except ValueError:
            _bad(SEED_ENV, f"must be an integer, got {environ[SEED_ENV]!r}")
    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        raw[section][key] = _check_type(section, key, value)
    return raw


def _build(cls, section, values, owner=None):
    """Construct ``cls`` reporting the offending key on failure.

    Errors that do not carry a key are attributed by retrying each key on its
    own; ``owner`` maps keys that live in another section.
    """
    owner = owner or {}

    def name(key):
        return f"{owner.get(key, section)}.{key}"

    try:
        return cls(**values)
    except InvalidConfiguration as exc:
        if exc.key:
            _bad(name(exc.key), str(exc))
        err = exc
    except (InvalidInput, TypeError, ValueError) as exc:
        err = exc
    for key, value in values.items():
        try:
            cls(**{key: value})
        except (InvalidConfiguration, InvalidInput, TypeError, ValueError) as exc:
            _bad(name(key), str(exc))
    _bad(section, str(err))


@dataclass(frozen=True)
class RunConfig:
    """Fully validated settings for one CLI invocation."""

    sim: SimConfig
    sweep: SweepConfig
    solver: SolverConfig
    theta: ThetaConfig
    rate_estimator: str
    rate_band: tuple
    rate_min_replicates: int
    fit_dataset: str
    fit_queries: str
    fit_estimator: str
    output_dir: str
    log_axes: bool
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def seed(self):
        return self.sim.seed

    def echo(self):
        """JSON-ready copy of the resolved key/value table (unset keys omitted)."""
        return {s: {k: v for k, v in t.items() if v is not None} for s, t in self.raw.items()}


def resolve(raw):
    """Validate the merged table and build a :class:`RunConfig`."""
    s = raw["simulation"]
    sim_keys = {k: s[k] for k in ("n", "m", "q", "mu_x", "beta0", "delta", "v1", "seed", "M",
                                   "spherical", "design_seed") if s[k] is not None}
    sim = _build(SimConfig, "simulation", sim_keys)
    solver = _build(SolverConfig, "solver", raw["solver"])
    theta = _build(ThetaConfig, "theta", {k: v for k, v in raw["theta"].items() if v is not None})

    pairs = s["collinear_pairs"]
    if not all(isinstance(p, list) and len(p) == 2 and all(isinstance(i, int) and 0 <= i < sim.m for i in p)
               for p in pairs):
        _bad("simulation.collinear_pairs", f"must be a list of [i, j] column index pairs below m={sim.m}")
    sw = raw["sweep"]
    if not all(isinstance(n, int) and not isinstance(n, bool) for n in sw["n_grid"]):
        _bad("sweep.n_grid", "must be a list of integers")
    sweep_keys = dict(sw)
    sweep_keys.update(noise_sigma=s["noise_sigma"], collinear_pairs=tuple(map(tuple, pairs)),
                      collinear_jitter=s["collinear_jitter"], metric=s["metric"])
    sweep = _build(SweepConfig, "sweep", sweep_keys,
                   owner=dict.fromkeys(("noise_sigma", "collinear_pairs", "collinear_jitter", "metric"), "simulation"))
    sweep = SweepConfig(**{**{k: getattr(sweep, k) for k in sweep.__dataclass_fields__},
                           "sim": sim, "theta": theta, "solver": solver, "master_seed": sim.seed})

    band = raw["rate"]["band"]
    if len(band) != 2 or not all(isinstance(b, _NUM) and not isinstance(b, bool) for b in band) \
            or not band[0] < band[1]:
        _bad("rate.band", f"must be [low, high] with low < high, got {band!r}")
    rate_est = _estimator(raw["rate"]["estimator"], "rate.estimator")
    if raw["rate"]["min_replicates"] < 1:
        _bad("rate.min_replicates", "must be >= 1")
    fit_est = _estimator(raw["fit"]["estimator"], "fit.estimator")

    out = raw["output"]["dir"]
    if not out:
        _bad("output.dir", "must not be empty")
    return RunConfig(sim=sim, sweep=sweep, solver=solver, theta=theta, rate_estimator=rate_est,
                     rate_band=(float(band[0]), float(band[1])),
                     rate_min_replicates=raw["rate"]["min_replicates"], fit_dataset=raw["fit"]["dataset"],
                     fit_queries=raw["fit"]["queries"], fit_estimator=fit_est, output_dir=out,
                     log_axes=raw["output"]["log_axes"], raw=raw)


def _estimator(value, key):
    try:
        return EstimatorKind.parse(value).value
    except InvalidConfiguration as exc:
        _bad(key, str(exc))


def ensure_output_dir(path):
    """Create ``path`` if needed and confirm it is writable."""
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".mgfr-write-test")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        _bad("output.dir", f"cannot write to {path!r}: {exc.strerror or exc}")


def load_config(path=None, overrides=None, environ=None):
    return resolve(merge_layers(load_file(path) if path else None, overrides, environ))


__all__ = ["SCHEMA", "SEED_ENV", "RunConfig", "parse_literal", "load_file", "merge_layers", "resolve",
           "load_config", "ensure_output_dir"]
