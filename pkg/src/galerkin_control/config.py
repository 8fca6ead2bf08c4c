"""JSON experiment configs: schema validation, model and state decoding."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .compiler import DEFAULT_SAMPLES_PER_PERIOD
from .core import BilinearSystem
from .graph import GAP_TOLERANCE
from .models import DeltaBoxModel, ModelValidationError, user_matrix_model
from .pipeline import DisconnectedError, ExperimentSettings

SCHEMA_VERSION = 1

_number = {"type": "number"}
_complex = {"oneOf": [_number, {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}]}
_state = {
    "oneOf": [
        {"type": "array", "items": _complex, "minItems": 1},
        {"type": "object", "patternProperties": {"^[0-9]+$": _complex}, "additionalProperties": False, "minProperties": 1},
    ]
}
_matrix = {"type": "array", "items": {"type": "array", "items": _number}}

_DELTA_BOX = {
    "properties": {
        "type": {},
        "position": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "eta": {"type": "number", "minimum": 0},
        "truncation": {"type": "integer", "minimum": 2},
        "subspace": {"enum": ["even", "full"]},
    },
    "additionalProperties": False,
}
_MATRIX = {
    "required": ["spectrum", "coupling_re"],
    "properties": {
        "type": {},
        "spectrum": {"type": "array", "items": _number, "minItems": 1},
        "coupling_re": _matrix,
        "coupling_im": _matrix,
        "r": {"type": "number", "exclusiveMinimum": 0},
        "a": {"type": "number", "minimum": 0},
        "b": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "model"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "model": {
            "type": "object",
            "required": ["type"],
            "properties": {"type": {"enum": ["delta_box", "matrix"]}},
            "allOf": [
                {"if": {"properties": {"type": {"const": "delta_box"}}}, "then": _DELTA_BOX},
                {"if": {"properties": {"type": {"const": "matrix"}}}, "then": _MATRIX},
            ],
        },
        "approximation": {
            "type": "object",
            "required": ["type", "max_n"],
            "properties": {
                "type": {"const": "rank_truncation"},
                "max_n": {"type": "integer", "minimum": 1},
                "mu": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "psi0": _state,
        "psi1": _state,
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "r": {"type": "number", "exclusiveMinimum": 0},
        "u0": {"type": "number", "exclusiveMinimum": 0},
        "nu": {"type": "number", "exclusiveMinimum": 0},
        "m": {"type": "integer", "minimum": 1},
        "samples_per_period": {"type": "integer", "minimum": 8},
        "lift": {"type": "boolean"},
        "eta_max": {"type": "number", "exclusiveMinimum": 0},
        "gap_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "target_level": {"type": "integer", "minimum": 1},
        "target_strategy": {"enum": ["lowest", "separated"]},
        "alias_guard": {"type": "boolean"},
        "seed": {"type": "integer"},
        "grid": {
            "type": "object",
            "properties": {
                "u0": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "samples_per_period": {"type": "array", "items": {"type": "integer", "minimum": 8}, "minItems": 1},
                "truncation": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


def _where(error: jsonschema.ValidationError) -> str:
    path = "/".join(str(p) for p in error.absolute_path)
    return path or "<root>"


def _best_error(error: jsonschema.ValidationError) -> jsonschema.ValidationError:
    # oneOf failures hide the useful message in the closest branch
    if error.context:
        return _best_error(jsonschema.exceptions.best_match(error.context))
    return error


def parse_config(text: str, source: str = "<config>") -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for err in errors:
            best = _best_error(err)
            lines.append(f"{source}: field {_where(best)}: {best.message}")
        raise ConfigError("\n".join(lines))
    return data


def load_config(path) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from exc
    return parse_config(text, str(p))


@dataclass(frozen=True)
class LoadedModel:
    model: object
    truncation: int | None
    subspace: str


def build_model(cfg: dict) -> LoadedModel:
    spec = cfg["model"]
    r = float(cfg.get("r", spec.get("r", 1.0)))
    if spec["type"] == "delta_box":
        truncation = spec.get("truncation")
        try:
            model = DeltaBoxModel(float(spec.get("position", 0.5)), float(spec.get("eta", 0.0)), max(2, truncation or 2))
        except ValueError as exc:
            raise ConfigError(f"field model: {exc}") from exc
        subspace = spec.get("subspace", "even" if model.centered else "full")
        if subspace == "even" and not model.centered:
            raise ConfigError("field model/subspace: the even subspace needs position 0.5")
        return LoadedModel(model, truncation, subspace)
    lam = np.asarray(spec["spectrum"], dtype=float)
    re = np.asarray(spec["coupling_re"], dtype=float)
    im = np.asarray(spec.get("coupling_im", np.zeros_like(re)), dtype=float)
    if re.shape != im.shape:
        raise ConfigError("field model/coupling_im: shape differs from coupling_re")
    try:
        system = user_matrix_model(lam, re + 1j * im, r, float(spec.get("a", 0.0)), float(spec.get("b", 0.0)))
    except ModelValidationError as exc:
        raise ConfigError("\n".join(f"field model: {p}" for p in exc.problems)) from exc
    return LoadedModel(system, system.size, "full")


def working_labels(loaded: LoadedModel, n: int) -> tuple[int, ...]:
    if isinstance(loaded.model, BilinearSystem):
        return loaded.model.levels[:n]
    if loaded.subspace == "even":
        return tuple(range(1, 2 * n, 2))
    return tuple(range(1, n + 1))


def _amplitude(v) -> complex:
    return complex(v[0], v[1]) if isinstance(v, list) else complex(v)


def decode_state(value, labels: tuple[int, ...], name: str, parity_even: bool = False) -> np.ndarray:
    """State in working coordinates, normalized.

    A list gives coefficients in working order; an object maps physical
    level labels to amplitudes.
    """
    if isinstance(value, list):
        if len(value) > len(labels):
            raise ConfigError(f"field {name}: {len(value)} coefficients exceed the {len(labels)} working levels")
        x = np.zeros(len(labels), dtype=complex)
        x[: len(value)] = [_amplitude(v) for v in value]
    else:
        index = {k: i for i, k in enumerate(labels)}
        x = np.zeros(len(labels), dtype=complex)
        blocked = []
        for key, v in value.items():
            k = int(key)
            if k in index:
                x[index[k]] = _amplitude(v)
            elif parity_even and k % 2 == 0 and k <= 2 * len(labels) and _amplitude(v) != 0:
                blocked.append(k)
            else:
                raise ConfigError(f"field {name}/{key}: level {k} is outside the working truncation")
        if blocked:
            raise DisconnectedError(
                f"levels {sorted(blocked)} have odd parity and are decoupled from the even subspace", blocked
            )
    n = np.linalg.norm(x)
    if n == 0:
        raise ConfigError(f"field {name}: state is zero")
    return x / n


def experiment_settings(cfg: dict, loaded: LoadedModel) -> ExperimentSettings:
    return ExperimentSettings(
        epsilon=float(cfg.get("epsilon", 0.15)),
        r=float(cfg.get("r", cfg["model"].get("r", 1.0))),
        u0=cfg.get("u0"),
        nu=float(cfg.get("nu", 0.5)),
        m=cfg.get("m"),
        samples_per_period=int(cfg.get("samples_per_period", DEFAULT_SAMPLES_PER_PERIOD)),
        truncation=loaded.truncation,
        subspace=loaded.subspace,
        lift=bool(cfg.get("lift", True)),
        eta_max=float(cfg.get("eta_max", 0.5)),
        gap_tolerance=float(cfg.get("gap_tolerance", GAP_TOLERANCE)),
        target_level=cfg.get("target_level"),
        target_strategy=cfg.get("target_strategy", "lowest"),
        alias_guard=bool(cfg.get("alias_guard", True)),
        seed=cfg.get("seed"),
    )
