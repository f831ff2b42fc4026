"""Batch front-end: declarative configs in, result artifacts out.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 optimizer divergence. The worker flag (or SPDCKIT_WORKERS) is a
resource hint only — numeric results are identical at every setting.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import LoadedConfig, load_config
from .errors import (ConfigError, DivergenceError, EvaluationError,
                     NumericBlowupError, SpdcError)
from .imaging import write_heatmap
from .inverse import OptimizerConfig, optimize, perturb_crystal, recover_by_waist
from .io import (g2_to_dict, manifest_dict, moments_to_dict, rho_to_dict,
                 write_g2_csv, write_json)
from .objectives import LossSpec, trace_distance
from .structure import ParamSet

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_DIVERGED = 4

#: coincidence mass below which a simulate run is flagged as effectively empty
_NEAR_ZERO_G2 = 1e-25


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdckit",
        description="Simulate and inverse-design structured photon-pair sources.")
    parser.add_argument("--version", action="version", version=f"spdckit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
            ("simulate", "run the forward model and write coincidence artifacts"),
            ("learn", "optimize learnable parameters against a target"),
            ("tomography", "reconstruct and write the two-photon density matrix"),
            ("robustness", "perturb the crystal and re-optimize the pump waist")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--workers", type=int,
                       default=int(os.environ.get("SPDCKIT_WORKERS", "1")),
                       help="worker hint; results are identical at any value")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message, flush=True)


def _prepare(args, command: str) -> tuple[LoadedConfig, Path, dict]:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.experiment.spec = cfg.experiment.spec.with_(seed=args.seed)
    out_dir = Path(args.out if args.out is not None else cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = manifest_dict(cfg.raw, cfg.experiment.spec.seed, __version__, command,
                             args.workers)
    write_json(out_dir / "manifest.json", manifest)
    return cfg, out_dir, manifest


def _write_g2_artifacts(cfg: LoadedConfig, out_dir: Path, obs: dict, stem: str = "g2") -> None:
    if "json" in cfg.formats:
        write_json(out_dir / f"{stem}.json", g2_to_dict(obs["g2"]))
        write_json(out_dir / f"{stem}_normalized.json", g2_to_dict(obs["g2_normalized"]))
    if "csv" in cfg.formats:
        write_g2_csv(out_dir / f"{stem}.csv", obs["g2"])
        write_g2_csv(out_dir / f"{stem}_normalized.csv", obs["g2_normalized"])
    if cfg.images:
        write_heatmap(out_dir / f"{stem}.png", np.asarray(obs["g2_normalized"].values))


def cmd_simulate(args) -> int:
    cfg, out_dir, _ = _prepare(args, "simulate")
    t0 = time.monotonic()
    obs = cfg.experiment.observables()
    elapsed = time.monotonic() - t0
    _write_g2_artifacts(cfg, out_dir, obs)
    write_json(out_dir / "moments.json", moments_to_dict(obs["moments"]))
    total = obs["g2"].total()
    warnings = []
    if total < _NEAR_ZERO_G2:
        warnings.append("coincidence mass is effectively zero; "
                        "check the gain and the pump/crystal structure")
    report = {
        "elapsed_s": elapsed,
        "n_realizations": cfg.experiment.spec.n_realizations,
        "total_coincidence_mass": total,
        "clipped_mass": float(obs["g2"].clipped_mass),
        "warnings": warnings,
    }
    write_json(out_dir / "report.json", report)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    _say(args, f"simulate: wrote {out_dir} (total mass {total:.3e}, {elapsed:.1f}s)")
    return EXIT_OK


def cmd_learn(args) -> int:
    cfg, out_dir, _ = _prepare(args, "learn")
    exp = cfg.experiment
    if exp.params.n_learnable() == 0:
        raise ConfigError("learn requires at least one learnable parameter")
    loss = cfg.loss if cfg.loss is not None else LossSpec.default_g2()
    optimizer = cfg.optimizer if cfg.optimizer is not None else OptimizerConfig()
    targets = {k: v for k, v in cfg.targets.items() if v is not None}
    for needed in loss.targets_needed():
        if needed not in targets:
            raise ConfigError(f"loss requires a {needed!r} target in the targets block")
    t0 = time.monotonic()

    def progress(epoch, value, _vector):
        _say(args, f"  epoch {epoch:4d}  loss {value:.6f}")

    try:
        theta, history = optimize(exp.params, loss, optimizer, exp, targets,
                                  callback=progress)
    except DivergenceError as err:
        if err.history is not None:
            (out_dir / "history.jsonl").write_text(err.history.to_jsonl())
        raise
    elapsed = time.monotonic() - t0
    (out_dir / "history.jsonl").write_text(history.to_jsonl())
    write_json(out_dir / "params_learned.json", theta.to_json_dict())
    final = exp.with_params(theta).observables()
    _write_g2_artifacts(cfg, out_dir, final)
    comparison = {
        "initial_loss": float(history.records[0]["loss"]),
        "final_loss": float(history.best()["loss"]),
        "epochs": len(history.records),
        "elapsed_s": elapsed,
        "learnable_scalars": history.scalar_names,
    }
    write_json(out_dir / "comparison.json", comparison)
    _say(args, f"learn: loss {comparison['initial_loss']:.5f} -> "
               f"{comparison['final_loss']:.5f} in {comparison['epochs']} epochs; "
               f"wrote {out_dir}")
    return EXIT_OK


def cmd_tomography(args) -> int:
    cfg, out_dir, _ = _prepare(args, "tomography")
    if cfg.experiment.tomography is None:
        raise ConfigError("tomography requires a tomography block in the config")
    obs = cfg.experiment.observables()
    rho = obs["rho"]
    _write_g2_artifacts(cfg, out_dir, obs)
    write_json(out_dir / "rho.json", rho_to_dict(rho))
    eigvals = np.linalg.eigvalsh(rho.rho)
    report = {
        "d": rho.d,
        "trace": float(rho.trace().real),
        "hermiticity_residual": rho.hermiticity_residual(),
        "eigenvalues": [float(v) for v in eigvals],
        "min_eigenvalue": float(eigvals.min()),
    }
    if cfg.targets.get("rho") is not None:
        report["trace_distance_to_target"] = trace_distance(rho.rho, cfg.targets["rho"])
    write_json(out_dir / "rho_report.json", report)
    if cfg.images:
        write_heatmap(out_dir / "rho_real.png", rho.rho.real, symmetric=True)
        write_heatmap(out_dir / "rho_imag.png", rho.rho.imag, symmetric=True)
    _say(args, f"tomography: wrote {out_dir} (min eigenvalue {report['min_eigenvalue']:.4f})")
    return EXIT_OK


def cmd_robustness(args) -> int:
    cfg, out_dir, _ = _prepare(args, "robustness")
    if cfg.robustness is None:
        raise ConfigError("robustness requires a robustness block in the config")
    exp = cfg.experiment
    loss = cfg.loss if cfg.loss is not None else LossSpec.default_g2()
    optimizer = cfg.optimizer if cfg.optimizer is not None else OptimizerConfig()
    targets = {k: v for k, v in cfg.targets.items() if v is not None}
    for needed in loss.targets_needed():
        if needed not in targets:
            raise ConfigError(f"loss requires a {needed!r} target in the targets block")
    if cfg.robustness.get("baseline_params"):
        with open(cfg.robustness["baseline_params"]) as fh:
            baseline = ParamSet.from_json_dict(json.load(fh))
    else:
        baseline = exp.params
    if baseline.crystal_coeffs is None:
        raise ConfigError("robustness needs a structured crystal to perturb")

    fn = exp.with_params(baseline).loss_function(loss, targets)
    original_loss = float(fn(baseline.flatten()[0]))
    rows = []
    for mode in cfg.robustness["modes"]:
        for k, sigma in enumerate(cfg.robustness["sigmas"]):
            seed = cfg.robustness["perturbation_seed"] + k
            perturbed = perturb_crystal(baseline, sigma, mode=mode, seed=seed)
            recovered, report = recover_by_waist(
                perturbed, loss, optimizer, exp.with_params(perturbed), targets,
                original_loss=original_loss)
            rows.append({"mode": mode, "sigma": float(sigma), **report,
                         "recovered_pump_waists_m":
                             [float(w) for w in recovered.pump_waists]})
            _say(args, f"  {mode} sigma={sigma:g}: "
                       f"{report['perturbed_loss']:.5f} -> {report['recovered_loss']:.5f}")
            if cfg.images:
                tag = f"{mode}_{sigma:g}"
                degraded = exp.with_params(perturbed).observables()
                write_heatmap(out_dir / f"g2_degraded_{tag}.png",
                              np.asarray(degraded["g2_normalized"].values))
                rec_obs = exp.with_params(recovered).observables()
                write_heatmap(out_dir / f"g2_recovered_{tag}.png",
                              np.asarray(rec_obs["g2_normalized"].values))
    write_json(out_dir / "robustness.json",
               {"original_loss": original_loss, "rows": rows})
    _say(args, f"robustness: wrote {out_dir}")
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "learn": cmd_learn,
    "tomography": cmd_tomography,
    "robustness": cmd_robustness,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as err:
        print(f"divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except (NumericBlowupError, EvaluationError, FloatingPointError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except SpdcError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
