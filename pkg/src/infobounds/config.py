"""Model and experiment configuration.

A model is described either by a short name with optional parameters,
``"exponential:beta=2"``, or by a JSON document naming the model type::

    {"model": "gaussian-scalar", "s": [1, 0], "K": [[1, 0], [0, 1]],
     "mu": 0, "sigma2": 1}

Matrices may be nested lists (row-major), ``{"shape": [m, n], "data": [...]}``
with a flat row-major list, or a path to a CSV file resolved relative to the
JSON file.  ``normal`` and ``exponential`` describe standalone posterior
families rather than joint models.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import ConfigError
from .models import (
    Exponential,
    Normal,
    make_exponential_prior_model,
    make_flat_likelihood_model,
    make_gaussian_imaging_model,
    make_gaussian_location_model,
    make_gaussian_scalar_model,
)

# model type -> allowed keys with their defaults
MODEL_TYPES: dict[str, dict[str, Any]] = {
    "gaussian-scalar": {"s": [1.0, 0.0], "K": [[1.0, 0.0], [0.0, 1.0]], "mu": 0.0, "sigma2": 1.0,
                        "flat_prior": False},
    "gaussian-location": {"noise_sd": 1.0, "mu": 0.0, "sigma2": 1.0},
    "flat-likelihood": {"mu": 0.0, "sigma2": 1.0},
    "exponential-prior": {"rate": 1.0},
    "imaging": {"H": [[1.0, 0.0]], "Kn": [[1.0]], "Ktheta": [[1.0, 0.0], [0.0, 1.0]], "mu_vec": None},
    "normal": {"mean": 0.0, "sd": 1.0},
    "exponential": {"rate": 1.0, "loc": 0.0},
}
ALIASES = {"sigma": "sd", "beta": "rate"}
MATRIX_KEYS = {"K", "H", "Kn", "Ktheta"}
VECTOR_KEYS = {"s", "mu_vec"}
FAMILY_TYPES = {"normal", "exponential"}


def _load_csv(path: str, base: Optional[str]) -> np.ndarray:
    full = path if os.path.isabs(path) or base is None else os.path.join(base, path)
    if not os.path.exists(full):
        raise ConfigError(f"matrix file not found: {full}")
    try:
        return np.loadtxt(full, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"cannot parse matrix file {full}: {exc}") from exc


def parse_matrix(value, key: str, base: Optional[str] = None) -> np.ndarray:
    if isinstance(value, str):
        return _load_csv(value, base)
    if isinstance(value, dict):
        if set(value) != {"shape", "data"}:
            raise ConfigError(f"matrix {key!r} needs exactly the fields 'shape' and 'data'")
        data = np.asarray(value["data"], dtype=float)
        shape = tuple(int(n) for n in value["shape"])
        if data.size != math.prod(shape):
            raise ConfigError(f"matrix {key!r}: {data.size} entries do not fill shape {shape}")
        return data.reshape(shape)
    try:
        return np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"matrix {key!r} is not numeric") from exc


def _coerce(key: str, value, base):
    if value is None:
        return None
    if key in MATRIX_KEYS:
        return parse_matrix(value, key, base)
    if key in VECTOR_KEYS:
        return parse_matrix(value, key, base).ravel()
    if key == "flat_prior":
        if isinstance(value, str):
            return value.lower() in ("1", "true", "yes")
        return bool(value)
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter {key!r} must be a number, got {value!r}") from exc


def normalize_spec(spec: dict, base: Optional[str] = None) -> dict:
    """Fill defaults, resolve aliases, reject unknown keys; returns plain JSON types."""
    spec = dict(spec)
    kind = spec.pop("model", None)
    if kind not in MODEL_TYPES:
        raise ConfigError(f"unknown model {kind!r}; choose from {', '.join(sorted(MODEL_TYPES))}")
    allowed = MODEL_TYPES[kind]
    out = {"model": kind}
    params = {}
    for k, v in spec.items():
        k = ALIASES.get(k, k)
        if k not in allowed:
            raise ConfigError(f"unknown field {k!r} for model {kind!r}; allowed: {', '.join(allowed)}")
        params[k] = v
    for k, default in allowed.items():
        val = _coerce(k, params.get(k, default), base)
        out[k] = val.tolist() if isinstance(val, np.ndarray) else val
    return out


def parse_model_string(text: str) -> dict:
    """``name`` or ``name:key=value,key=value``."""
    name, _, rest = text.partition(":")
    spec: dict[str, Any] = {"model": name.strip()}
    if rest.strip():
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise ConfigError(f"expected key=value in model string, got {item!r}")
            spec[key.strip()] = val.strip()
    return spec


def _looks_like_path(text: str) -> bool:
    return text.endswith(".json") or os.sep in text or os.path.exists(text)


def load_spec(text_or_path: str) -> dict:
    """Resolve a ``--model`` argument to a normalized spec."""
    if _looks_like_path(text_or_path):
        if not os.path.exists(text_or_path):
            raise ConfigError(f"model file not found: {text_or_path}")
        try:
            with open(text_or_path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {text_or_path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("model file must hold a JSON object")
        return normalize_spec(raw, os.path.dirname(os.path.abspath(text_or_path)))
    return normalize_spec(parse_model_string(text_or_path))


def build(spec: dict):
    """Model or posterior family for a normalized spec."""
    kind = spec["model"]
    p = {k: v for k, v in spec.items() if k != "model"}
    if kind == "gaussian-scalar":
        return make_gaussian_scalar_model(p["s"], p["K"], p["mu"], p["sigma2"], p["flat_prior"])
    if kind == "gaussian-location":
        return make_gaussian_location_model(p["noise_sd"], p["mu"], p["sigma2"])
    if kind == "flat-likelihood":
        return make_flat_likelihood_model(p["mu"], p["sigma2"])
    if kind == "exponential-prior":
        return make_exponential_prior_model(p["rate"])
    if kind == "imaging":
        return make_gaussian_imaging_model(p["H"], p["Kn"], p["Ktheta"], p["mu_vec"])
    if kind == "normal":
        if not p["sd"] > 0:
            raise ConfigError("sd must be positive")
        return Normal(p["mean"], p["sd"])
    if kind == "exponential":
        if not p["rate"] > 0:
            raise ConfigError("rate must be positive")
        return Exponential(p["rate"], p["loc"])
    raise ConfigError(f"unknown model {kind!r}")  # pragma: no cover


def load_model(text_or_path: str):
    return build(load_spec(text_or_path))


# --------------------------------------------------------------------------
# Experiment configuration
# --------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Everything needed to rerun one computation."""

    model: dict
    computation: str
    samples: int = 100_000
    seed: int = 0
    steps: Optional[list] = None
    theta: Optional[Any] = None
    theta0: Optional[Any] = None
    theta1: Optional[Any] = None
    side: str = "plus"
    direction: Optional[list] = None
    estimator: str = "posterior_mean"
    backend: Optional[str] = None
    outputs: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    jobs: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise ConfigError("samples must be positive")
        if self.side not in ("plus", "minus"):
            raise ConfigError("side must be 'plus' or 'minus'")
        unknown = set(self.tolerances) - {"sigmas"}
        if unknown:
            raise ConfigError(f"unknown tolerance overrides: {', '.join(sorted(unknown))}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        missing = {"model", "computation"} - set(data)
        if missing:
            raise ConfigError(f"missing config fields: {', '.join(sorted(missing))}")
        data = dict(data)
        model = data["model"]
        data["model"] = load_spec(model) if isinstance(model, str) else normalize_spec(model)
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]
