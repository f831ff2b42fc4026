"""Declarative experiment configuration: one JSON document, schema-checked.

Unknown keys are rejected everywhere; file references inside the targets
block are resolved (and must exist) at validation time, before any
computation starts.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .experiment import Experiment, TomographySetup
from .grids import make_grid
from .interaction import InteractionSpec
from .modes import ModeBasis, ModeIndex
from .objectives import LossSpec, LossTerm
from .inverse import OptimizerConfig
from .structure import ParamSet

_COMPLEX = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_CVEC = {"type": "array", "items": _COMPLEX, "minItems": 1}
_BOOLVEC = {"type": "array", "items": {"type": "boolean"}, "minItems": 1}
_NUMVEC = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_MATRIX = {"type": "array", "items": _NUMVEC, "minItems": 1}
_CMATRIX = {"type": "array", "items": _CVEC, "minItems": 1}

_BASIS = {
    "type": "object",
    "additionalProperties": False,
    "required": ["family", "waist_m"],
    "properties": {
        "family": {"enum": ["LG", "HG"]},
        "l_values": {"type": "array", "items": {"type": "integer"}},
        "p_values": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "nx_values": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "ny_values": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "waist_m": {"type": "number", "exclusiveMinimum": 0},
    },
}

_TARGET = {
    "oneOf": [
        {"type": "null"},
        _MATRIX,
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["file"],
            "properties": {"file": {"type": "string"}},
        },
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["grid", "interaction", "bases", "parameters"],
    "properties": {
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["nx", "ny", "dx_m", "dy_m"],
            "properties": {
                "nx": {"type": "integer", "minimum": 1},
                "ny": {"type": "integer", "minimum": 1},
                "dx_m": {"type": "number", "exclusiveMinimum": 0},
                "dy_m": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "interaction": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lambda_pump_m", "refractive_index", "crystal_length_m", "n_z"],
            "properties": {
                "lambda_pump_m": {"type": "number", "exclusiveMinimum": 0},
                "lambda_signal_m": {"type": ["number", "null"]},
                "refractive_index": {"type": "number", "exclusiveMinimum": 0},
                "crystal_length_m": {"type": "number", "exclusiveMinimum": 0},
                "n_z": {"type": "integer", "minimum": 1},
                "delta_k_1_per_m": {"type": ["number", "null"]},
                "poling_period_m": {"type": ["number", "null"]},
                "gain": {"type": "number", "exclusiveMinimum": 0},
                "n_realizations": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "bases": {
            "type": "object",
            "additionalProperties": False,
            "required": ["pump", "signal", "idler"],
            "properties": {
                "pump": _BASIS,
                "crystal": {"oneOf": [{"type": "null"}, _BASIS]},
                "signal": _BASIS,
                "idler": _BASIS,
            },
        },
        "parameters": {
            "type": "object",
            "additionalProperties": False,
            "required": ["pump_coefficients"],
            "properties": {
                "pump_coefficients": _CVEC,
                "pump_waists_m": {"oneOf": [{"type": "null"}, _NUMVEC]},
                "learn_pump_coefficients": {"oneOf": [{"type": "boolean"}, _BOOLVEC]},
                "learn_pump_waists": {"oneOf": [{"type": "boolean"}, _BOOLVEC]},
                "crystal": {
                    "oneOf": [
                        {"type": "null"},
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["coefficients"],
                            "properties": {
                                "coefficients": {"type": "array", "items": _CVEC, "minItems": 1},
                                "waists_m": {"oneOf": [{"type": "null"}, _NUMVEC]},
                                "learn_coefficients": {
                                    "oneOf": [{"type": "boolean"},
                                              {"type": "array", "items": _BOOLVEC}]},
                                "learn_waists": {"oneOf": [{"type": "boolean"}, _BOOLVEC]},
                            },
                        },
                    ]
                },
            },
        },
        "loss": {
            "type": "object",
            "additionalProperties": False,
            "required": ["terms"],
            "properties": {
                "terms": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind"],
                        "properties": {
                            "kind": {"enum": ["kl", "l1", "trace_distance"]},
                            "weight": {"type": "number", "minimum": 0},
                            "target": {"enum": ["g2", "rho"]},
                        },
                    },
                }
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_epochs": {"type": "integer", "minimum": 1},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "decay": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "tolerance": {"type": "number", "minimum": 0},
                "patience": {"type": "integer", "minimum": 1},
                "gradient_mode": {"enum": ["adjoint", "finite_difference"]},
                "fd_step": {"type": "number"},
                "noise_policy": {"enum": ["fixed", "resample"]},
                "method": {"enum": ["gd", "momentum", "adam"]},
            },
        },
        "targets": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"g2": _TARGET, "rho": {
                "oneOf": [{"type": "null"}, _CMATRIX,
                          {"type": "object", "additionalProperties": False,
                           "required": ["file"],
                           "properties": {"file": {"type": "string"}}}]}},
        },
        "tomography": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "subspace_l": {"type": "array", "minItems": 2,
                                       "items": {"type": "integer"}},
                        "idler_slots": {"type": "array", "minItems": 2,
                                        "items": {"type": "integer", "minimum": 0}},
                        "signal_slots": {"type": "array", "minItems": 2,
                                         "items": {"type": "integer", "minimum": 0}},
                    },
                },
            ]
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "pump_diffraction": {"type": "boolean"},
                "project_at": {"enum": ["center", "facet"]},
                "noise_scale": {"type": "number", "exclusiveMinimum": 0},
                "max_chunk": {"type": "integer", "minimum": 1},
            },
        },
        "robustness": {
            "type": "object",
            "additionalProperties": False,
            "required": ["sigmas"],
            "properties": {
                "sigmas": {"type": "array", "minItems": 1,
                           "items": {"type": "number", "minimum": 0}},
                "modes": {"type": "array", "minItems": 1,
                          "items": {"enum": ["multiplicative", "additive"]}},
                "baseline_params": {"type": ["string", "null"]},
                "perturbation_seed": {"type": "integer", "minimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["json", "csv"]}},
                "images": {"type": "boolean"},
            },
        },
    },
}


def _complex_vector(pairs) -> np.ndarray:
    return np.array([complex(re, im) for re, im in pairs], dtype=np.complex128)


def _expand_mask(value, shape) -> np.ndarray:
    if value is None:
        return np.zeros(shape, dtype=bool)
    if isinstance(value, bool):
        return np.full(shape, value, dtype=bool)
    arr = np.asarray(value, dtype=bool)
    if arr.shape != shape:
        raise ConfigError(f"mask shape {arr.shape} does not match parameters {shape}")
    return arr


def _build_basis(block: dict, grid) -> ModeBasis:
    family = block["family"]
    if family == "LG":
        if "l_values" not in block:
            raise ConfigError("LG basis needs l_values")
        idx = tuple(ModeIndex.lg(l, p)
                    for l in block["l_values"] for p in block.get("p_values", [0]))
    else:
        if "nx_values" not in block:
            raise ConfigError("HG basis needs nx_values")
        idx = tuple(ModeIndex.hg(nx, ny)
                    for nx in block["nx_values"] for ny in block.get("ny_values", [0]))
    return ModeBasis(indices=idx, waists=(block["waist_m"],) * len(idx), grid=grid)


@dataclass
class LoadedConfig:
    """Validated configuration plus everything built from it."""

    raw: dict
    experiment: Experiment
    loss: LossSpec | None
    optimizer: OptimizerConfig | None
    targets: dict
    robustness: dict | None
    output_dir: str
    formats: tuple[str, ...]
    images: bool


def validate_config(doc: dict) -> None:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as err:
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {err.message}") from err


def _resolve_target(value, base_dir: Path, complex_valued: bool):
    if value is None:
        return None
    if isinstance(value, dict):
        path = (base_dir / value["file"]).resolve()
        if not path.exists():
            raise ConfigError(f"target file not found: {path}")
        with open(path) as fh:
            doc = json.load(fh)
        value = doc.get("rho") if complex_valued else doc.get("values", doc)
        if value is None:
            raise ConfigError(f"target file {path} carries no usable matrix")
    if complex_valued:
        rows = [[complex(re, im) for re, im in row] for row in value]
        return np.asarray(rows, dtype=np.complex128)
    arr = np.asarray(value, dtype=np.float64)
    if np.any(arr < 0):
        raise ConfigError("coincidence targets must be non-negative")
    total = arr.sum()
    if total <= 0:
        raise ConfigError("coincidence target has no mass")
    return arr / total


def load_config(path) -> LoadedConfig:
    """Parse, schema-validate and materialize a config file."""
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: line {err.lineno}: {err.msg}") from err
    validate_config(doc)
    return build_config(doc, base_dir=path.parent)


def build_config(doc: dict, base_dir=".") -> LoadedConfig:
    doc = copy.deepcopy(doc)
    base_dir = Path(base_dir)
    g = doc["grid"]
    grid = make_grid(g["nx"], g["ny"], g["dx_m"], g["dy_m"])

    i = doc["interaction"]
    spec = InteractionSpec.collinear(
        lambda_p=i["lambda_pump_m"], refractive_index=i["refractive_index"],
        L=i["crystal_length_m"], n_z=i["n_z"], lambda_s=i.get("lambda_signal_m"),
        delta_k=i.get("delta_k_1_per_m"), poling_period=i.get("poling_period_m"),
        chi2_magnitude=i.get("gain", 1.0), n_realizations=i.get("n_realizations", 500),
        seed=i.get("seed", 0))

    bases = doc["bases"]
    pump_basis = _build_basis(bases["pump"], grid)
    signal_basis = _build_basis(bases["signal"], grid)
    idler_basis = _build_basis(bases["idler"], grid)
    crystal_basis = (_build_basis(bases["crystal"], grid)
                     if bases.get("crystal") is not None else None)

    p = doc["parameters"]
    pump_coeffs = _complex_vector(p["pump_coefficients"])
    if len(pump_coeffs) != len(pump_basis):
        raise ConfigError(f"{len(pump_coeffs)} pump coefficients for a "
                          f"{len(pump_basis)}-mode pump basis")
    pump_waists = (np.asarray(p["pump_waists_m"], dtype=np.float64)
                   if p.get("pump_waists_m") is not None
                   else np.asarray(pump_basis.waists))
    kwargs = dict(
        pump_coeffs=pump_coeffs, pump_waists=pump_waists,
        learn_pump_coeffs=_expand_mask(p.get("learn_pump_coefficients"), pump_coeffs.shape),
        learn_pump_waists=_expand_mask(p.get("learn_pump_waists"), pump_waists.shape),
        pump_labels=pump_basis.labels)
    pc = p.get("crystal")
    if (pc is None) != (crystal_basis is None):
        raise ConfigError("crystal parameters and crystal basis must come together")
    if pc is not None:
        coeffs = np.stack([_complex_vector(row) for row in pc["coefficients"]])
        if coeffs.shape[1] != len(crystal_basis):
            raise ConfigError(f"{coeffs.shape[1]} crystal coefficients for a "
                              f"{len(crystal_basis)}-mode crystal basis")
        waists = (np.asarray(pc["waists_m"], dtype=np.float64)
                  if pc.get("waists_m") is not None
                  else np.asarray(crystal_basis.waists))
        lc = pc.get("learn_coefficients")
        if isinstance(lc, list):
            lc = np.asarray(lc, dtype=bool)
        kwargs.update(
            crystal_coeffs=coeffs, crystal_waists=waists,
            learn_crystal_coeffs=_expand_mask(lc, coeffs.shape),
            learn_crystal_waists=_expand_mask(pc.get("learn_waists"), waists.shape),
            crystal_labels=crystal_basis.labels)
    params = ParamSet(**kwargs)

    tomo = None
    t = doc.get("tomography")
    if t is not None:
        if "subspace_l" in t:
            slots_i = tuple(idler_basis.position(ModeIndex.lg(l)) for l in t["subspace_l"])
            slots_s = tuple(signal_basis.position(ModeIndex.lg(l)) for l in t["subspace_l"])
        elif "idler_slots" in t and "signal_slots" in t:
            slots_i = tuple(t["idler_slots"])
            slots_s = tuple(t["signal_slots"])
        else:
            raise ConfigError("tomography needs subspace_l or explicit slots")
        tomo = TomographySetup(idler_slots=slots_i, signal_slots=slots_s)

    s = doc.get("solver", {})
    experiment = Experiment(
        grid=grid, spec=spec, pump_basis=pump_basis, signal_basis=signal_basis,
        idler_basis=idler_basis, crystal_basis=crystal_basis, params=params,
        noise_scale=s.get("noise_scale", 1.0),
        pump_diffraction=s.get("pump_diffraction", True),
        project_at=s.get("project_at", "center"),
        max_chunk=s.get("max_chunk", 256), tomography=tomo)

    loss = None
    if "loss" in doc:
        loss = LossSpec(terms=tuple(
            LossTerm(kind=t["kind"], weight=t.get("weight", 1.0),
                     target=t.get("target", "g2"))
            for t in doc["loss"]["terms"]))

    optimizer = OptimizerConfig(**doc["optimizer"]) if "optimizer" in doc else None

    tblock = doc.get("targets", {})
    targets = {
        "g2": _resolve_target(tblock.get("g2"), base_dir, complex_valued=False),
        "rho": _resolve_target(tblock.get("rho"), base_dir, complex_valued=True),
    }

    rb = doc.get("robustness")
    if rb is not None:
        rb = dict(rb)
        if rb.get("baseline_params"):
            bp = (base_dir / rb["baseline_params"]).resolve()
            if not bp.exists():
                raise ConfigError(f"baseline parameter file not found: {bp}")
            rb["baseline_params"] = str(bp)
        rb.setdefault("modes", ["multiplicative", "additive"])
        rb.setdefault("perturbation_seed", 0)

    out = doc.get("output", {})
    return LoadedConfig(
        raw=doc, experiment=experiment, loss=loss, optimizer=optimizer,
        targets=targets, robustness=rb,
        output_dir=out.get("directory", "spdc_out"),
        formats=tuple(out.get("formats", ["json", "csv"])),
        images=out.get("images", True))
