"""Artifact serialization: canonical JSON, CSV views, run manifests.

Numeric artifacts (coincidence tables, density matrices, parameters) are
written with sorted keys and no timestamps, so identical inputs produce
byte-identical files; wall-clock information goes only into the separate
run report.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .observables import CoincidenceMatrix, DensityMatrix, MomentSet


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(canonical_json(obj))


def complex_pairs(matrix) -> list:
    m = np.asarray(matrix)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def g2_to_dict(cm: CoincidenceMatrix) -> dict:
    return {
        "row_labels": list(cm.row_labels),
        "col_labels": list(cm.col_labels),
        "values": [[float(v) for v in row] for row in np.asarray(cm.values)],
        "normalized": bool(cm.normalized),
        "clipped_mass": float(cm.clipped_mass),
    }


def write_g2_csv(path, cm: CoincidenceMatrix) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["idler \\ signal", *cm.col_labels])
        for label, row in zip(cm.row_labels, np.asarray(cm.values)):
            writer.writerow([label, *[f"{v:.12e}" for v in row]])


def rho_to_dict(dm: DensityMatrix) -> dict:
    return {
        "d": int(dm.d),
        "idler_levels": list(dm.idler_levels),
        "signal_levels": list(dm.signal_levels),
        "rho": complex_pairs(dm.rho),
    }


def moments_to_dict(m: MomentSet) -> dict:
    return {
        "n_realizations": int(m.n_realizations),
        "statistical_tolerance": float(m.statistical_tolerance),
        "signal_labels": list(m.signal_labels),
        "idler_labels": list(m.idler_labels),
        "n_signal_diag": [float(v) for v in np.diag(m.n_signal).real],
        "n_idler_diag": [float(v) for v in np.diag(m.n_idler).real],
        "anomalous_abs": [[float(v) for v in row] for row in np.abs(m.anomalous)],
        "cross_abs_max": float(np.max(np.abs(m.cross))),
    }


def config_digest(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def manifest_dict(raw_config: dict, seed: int, version: str, command: str,
                  workers: int) -> dict:
    return {
        "command": command,
        "config_sha256": config_digest(raw_config),
        "seed": int(seed),
        "tool_version": version,
        "workers": int(workers),
    }
