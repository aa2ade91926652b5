"""Scenario configuration: JSON ingestion, defaults, validation.

A config file is a JSON object.  Every key is optional; missing keys take
the scenario's defaults.  Recognised keys::

    base        {"matrix": [[2, 1], [1, 1]], "leaf_radius": 0.4}
    generators  {name: generator entry}
    beta        Hölder exponent of the data (default 1.0)
    tolerances  {name: positive float}
    n_max       {name: positive int}
    samples     {name: positive int}
    seed        integer in [0, 2**64)
    output      output directory
    params      scenario-specific settings; generator references are names

A generator entry has a ``kind``:

    constant  {"kind": "constant", "matrix": [[...]]}
    fourier   {"kind": "fourier", "dimension": d, "constant_factor": [...],
               "terms": [{"k": [...], "P": [...], "Q": [...]}]}
    random    {"kind": "random", "dimension": d, "scale": s, "n_terms": n,
               "seed": k, "constant_factor": [[...]], "max_wave": 2}
    rotation  {"kind": "rotation", "angle": a, "scale": 1.0}
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .base import HyperbolicAutomorphism, make_automorphism
from .errors import CocycleLabError, ConfigError
from .fields import MatrixField, TrigSection, random_matrix_field, rotation

SCENARIOS = ("pw-demo", "one-exponent", "perturbation", "holonomy-verify", "twist-verify")

_NEAR_IDENTITY = {
    "kind": "fourier",
    "dimension": 2,
    "terms": [
        {"k": [1, 0], "P": [0.1, 0.05, 0.0, -0.1], "Q": [0.0, 0.05, 0.02, 0.0]},
        {"k": [0, 1], "P": [0.0, 0.08, -0.03, 0.0], "Q": [0.05, 0.0, 0.0, 0.02]},
        {"k": [1, 1], "P": [0.02, 0.0, 0.04, 0.0], "Q": [0.0, 0.0, 0.0, 0.06]},
    ],
}

_ETA = {
    "dimension": 2,
    "constant": [0.1, -0.2],
    "terms": [
        {"k": [1, 0], "a": [0.3, 0.1], "b": [0.0, 0.2]},
        {"k": [1, -1], "a": [0.05, 0.1], "b": [0.1, 0.0]},
        {"k": [0, 2], "a": [0.0, 0.1], "b": [0.05, 0.0]},
    ],
}

_COMMON = {
    "base": {"matrix": [[2, 1], [1, 1]], "leaf_radius": 0.4},
    "beta": 1.0,
    "seed": 0,
    "output": "cocycle_lab_out",
}

DEFAULTS = {
    "holonomy-verify": {
        "generators": {"near_identity": _NEAR_IDENTITY},
        "tolerances": {"holonomy": 1e-10},
        "n_max": {"holonomy": 2000, "growth": 64},
        "samples": {"triples": 50, "growth": 8},
        "params": {"cocycle": "near_identity", "leaf": "stable"},
    },
    "twist-verify": {
        "generators": {"twist": {"kind": "rotation", "angle": 0.7}},
        "tolerances": {"holonomy": 1e-10, "coboundary": 1e-9},
        "n_max": {"holonomy": 2000},
        "samples": {"points": 30, "pairs": 30},
        "params": {"twist": "twist", "leaf": "stable",
                   "phi": {"kind": "coboundary", "eta": _ETA}},
    },
    "one-exponent": {
        "generators": {"C0": {"kind": "random", "dimension": 3, "scale": 0.3, "n_terms": 3,
                              "seed": 5}},
        "tolerances": {"holonomy": 1e-10, "conjugacy": 1e-8, "intertwining": 1e-7},
        "n_max": {"holonomy": 2000, "exponents": 2000},
        "samples": {"conjugacy": 30, "intertwining": 20, "holder": 8},
        "params": {"rho": 1.05, "angle": 0.9, "C0": "C0"},
    },
    "perturbation": {
        "generators": {"B": {"kind": "random", "dimension": 2, "scale": 0.01, "n_terms": 3,
                             "seed": 5, "constant_factor": [[2.0, 0.0], [0.0, 0.5]]}},
        "tolerances": {"angle": 0.1, "exponent": 0.02},
        "n_max": {"power": 40, "exponents": 2000},
        "samples": {"points": 8},
        "params": {"reference": [[2.0, 0.0], [0.0, 0.5]], "B": "B"},
    },
    "pw-demo": {
        "generators": {},
        "tolerances": {"convergence": 1e-6},
        "n_max": {"short": 200, "long": 400},
        "samples": {"points": 1000, "monte_carlo": 100000},
        "params": {"alpha": -0.2, "epsilon": 1.0, "denominator_bits": 8,
                   "sup_growth_factor": 2.0, "min_fraction": 0.95},
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key == "generators" and isinstance(val, dict):
            # whole specs are replaced by name; other names are kept
            out[key] = {**out.get(key, {}), **copy.deepcopy(val)}
        elif isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _matrix(value, path: str, square: bool = True) -> np.ndarray:
    try:
        M = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("expected a numeric matrix", path) from None
    if M.ndim != 2 or (square and M.shape[0] != M.shape[1]):
        raise ConfigError(f"expected a square matrix, got shape {M.shape}", path)
    return M


def build_generator(spec: dict, path: str) -> MatrixField:
    """A MatrixField from a generator entry; errors name ``path``."""
    if not isinstance(spec, dict):
        raise ConfigError("generator entry must be an object", path)
    kind = spec.get("kind")
    try:
        if kind == "constant":
            return MatrixField.constant(_matrix(spec.get("matrix"), f"{path}.matrix"))
        if kind == "rotation":
            return MatrixField.constant(float(spec.get("scale", 1.0))
                                        * rotation(float(spec["angle"])))
        if kind == "fourier":
            return MatrixField.from_dict(spec)
        if kind == "random":
            d = int(spec["dimension"])
            c0 = spec.get("constant_factor")
            c0 = None if c0 is None else _matrix(c0, f"{path}.constant_factor")
            return random_matrix_field(d, int(spec.get("m", 2)), float(spec["scale"]),
                                       int(spec["n_terms"]), int(spec["seed"]),
                                       constant_factor=c0,
                                       max_wave=int(spec.get("max_wave", 2)))
    except KeyError as exc:
        raise ConfigError("missing key", f"{path}.{exc.args[0]}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), path) from None
    raise ConfigError(f"unknown generator kind {kind!r}", f"{path}.kind")


@dataclass
class ScenarioConfig:
    """A validated, fully resolved scenario configuration."""

    scenario: str
    raw: dict
    base: HyperbolicAutomorphism
    generators: dict = field(default_factory=dict)
    beta: float = 1.0
    tolerances: dict = field(default_factory=dict)
    n_max: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)
    seed: int = 0
    output: str = "cocycle_lab_out"
    params: dict = field(default_factory=dict)

    def generator(self, ref_path: str) -> MatrixField:
        """The generator named by ``params[ref_path]``."""
        return self.generators[self.params[ref_path]]

    def hash(self) -> str:
        """Short digest of the resolved config, output directory excluded."""
        data = {k: v for k, v in self.raw.items() if k != "output"}
        text = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _positive(section: dict, name: str, kind) -> dict:
    out = {}
    for key, val in section.items():
        path = f"{name}.{key}"
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError("expected a number", path)
        if kind is int and int(val) != val:
            raise ConfigError("expected an integer", path)
        if not val > 0:
            raise ConfigError("must be positive", path)
        out[key] = kind(val)
    return out


# params keys that hold generator names, per scenario
_REFERENCES = {
    "holonomy-verify": ("cocycle",),
    "twist-verify": ("twist",),
    "one-exponent": ("C0",),
    "perturbation": ("B",),
    "pw-demo": (),
}


def load_config(scenario: str, data: dict | None = None, seed: int | None = None,
                output: str | None = None) -> ScenarioConfig:
    """Merge ``data`` over the scenario defaults and validate.

    Raises ConfigError whose ``field`` is the dotted path of the bad entry.
    """
    if scenario not in DEFAULTS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}",
                          "scenario")
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", "<root>")
    unknown = set(data) - {"base", "generators", "beta", "tolerances", "n_max", "samples",
                           "seed", "output", "params"}
    if unknown:
        raise ConfigError("unknown key", sorted(unknown)[0])
    raw = _merge(_merge(_COMMON, DEFAULTS[scenario]), data)
    if seed is not None:
        raw["seed"] = seed
    if output is not None:
        raw["output"] = output

    s = raw["seed"]
    if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2**64:
        raise ConfigError("seed must be an integer in [0, 2**64)", "seed")
    beta = raw["beta"]
    if isinstance(beta, bool) or not isinstance(beta, (int, float)) or not 0 < beta <= 1:
        raise ConfigError("beta must be in (0, 1]", "beta")

    base_spec = raw["base"]
    try:
        base = make_automorphism(_matrix(base_spec.get("matrix"), "base.matrix"),
                                 leaf_radius=float(base_spec.get("leaf_radius", 0.4)))
    except ConfigError:
        raise
    except (CocycleLabError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), "base.matrix") from None
    if not 0 < base.leaf_radius < 0.5:
        raise ConfigError("leaf radius must be in (0, 0.5)", "base.leaf_radius")

    gens = {name: build_generator(spec, f"generators.{name}")
            for name, spec in raw["generators"].items()}
    params = raw["params"]
    for key in _REFERENCES[scenario]:
        ref = params.get(key)
        if ref not in gens:
            raise ConfigError(f"unknown generator name {ref!r}", f"params.{key}")
    return ScenarioConfig(
        scenario=scenario,
        raw=raw,
        base=base,
        generators=gens,
        beta=float(beta),
        tolerances=_positive(raw["tolerances"], "tolerances", float),
        n_max=_positive(raw["n_max"], "n_max", int),
        samples=_positive(raw["samples"], "samples", int),
        seed=int(s),
        output=str(raw["output"]),
        params=params,
    )


def read_config(path) -> dict:
    """Parse a JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", str(path)) from None
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None


def trig_section(spec: dict, path: str) -> TrigSection:
    try:
        return TrigSection.from_dict(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad vector section: {exc}", path) from None
