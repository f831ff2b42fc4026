"""Gradient-based learning of pump and crystal parameters.

Optimization works on the flattened vector of learnable real scalars
(complex coefficients as re/im pairs, waists through their logarithm).
The default gradient route is exact reverse-mode accumulation through the
unrolled split-step chain; central finite differences stay available both
as an independent oracle and as a cheap fallback for few-parameter
problems. With a fixed noise seed the loss is deterministic, so two runs
from the same configuration produce bit-identical histories.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace

import jax
import numpy as np

from .errors import ConfigError, DivergenceError, EvaluationError
from .experiment import Experiment
from .objectives import LossSpec
from .structure import ParamSet

ADJOINT = "adjoint"
FINITE_DIFFERENCE = "finite_difference"

GD = "gd"
MOMENTUM = "momentum"
ADAM = "adam"

FIXED_NOISE = "fixed"
RESAMPLED_NOISE = "resample"


@dataclass(frozen=True)
class OptimizerConfig:
    max_epochs: int = 100
    learning_rate: float = 0.1
    decay: float = 1.0              # multiplicative learning-rate factor per epoch
    tolerance: float = 1e-6         # minimum best-loss improvement that resets patience
    patience: int = 20
    gradient_mode: str = ADJOINT
    fd_step: float = 1e-5
    noise_policy: str = FIXED_NOISE
    method: str = GD
    momentum_beta: float = 0.9
    adam_betas: tuple[float, float] = (0.9, 0.999)
    divergence_factor: float = 10.0

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if not 0 < self.decay <= 1.0:
            raise ConfigError("decay must lie in (0, 1]")
        if self.gradient_mode not in (ADJOINT, FINITE_DIFFERENCE):
            raise ConfigError(f"unknown gradient mode {self.gradient_mode!r}")
        if not 1e-7 <= self.fd_step <= 1e-2:
            raise ConfigError(f"fd_step must lie in [1e-7, 1e-2], got {self.fd_step}")
        if self.noise_policy not in (FIXED_NOISE, RESAMPLED_NOISE):
            raise ConfigError(f"unknown noise policy {self.noise_policy!r}")
        if self.method not in (GD, MOMENTUM, ADAM):
            raise ConfigError(f"unknown update method {self.method!r}")

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.decay**epoch


@dataclass
class TrainingHistory:
    """Per-epoch record of one optimization run plus the final parameters."""

    records: list = field(default_factory=list)
    final_vector: np.ndarray | None = None
    scalar_names: list[str] = field(default_factory=list)

    def append(self, epoch: int, loss: float, vector: np.ndarray, wall_time: float) -> None:
        self.records.append({"epoch": int(epoch), "loss": float(loss),
                             "theta": [float(v) for v in vector],
                             "wall_time_s": float(wall_time)})

    @property
    def losses(self) -> np.ndarray:
        return np.array([r["loss"] for r in self.records])

    def best(self) -> dict:
        return min(self.records, key=lambda r: r["loss"])

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r, sort_keys=True) for r in self.records) + "\n"


def gradient(loss_fn, theta: ParamSet, mode: str = ADJOINT, fd_step: float = 1e-5,
             at_vector: np.ndarray | None = None) -> np.ndarray:
    """Gradient of a scalar loss over the learnable scalars of theta.

    ``loss_fn`` maps the flattened free vector to a real loss and must be
    traceable for the adjoint mode. The finite-difference mode uses
    central differences with the given step and serves as the independent
    check on the adjoint route.
    """
    v0, names = theta.flatten()
    if at_vector is not None:
        v0 = np.asarray(at_vector, dtype=np.float64)
    if not names:
        raise ConfigError("theta has no learnable scalars")
    if mode == ADJOINT:
        if hasattr(loss_fn, "grad"):
            g = loss_fn.grad(v0)
        else:
            g = np.asarray(jax.grad(loss_fn)(v0), dtype=np.float64)
    elif mode == FINITE_DIFFERENCE:
        g = np.empty_like(v0)
        for k in range(len(v0)):
            vp = v0.copy()
            vp[k] += fd_step
            vm = v0.copy()
            vm[k] -= fd_step
            g[k] = (float(loss_fn(vp)) - float(loss_fn(vm))) / (2.0 * fd_step)
    else:
        raise ConfigError(f"unknown gradient mode {mode!r}")
    if not np.all(np.isfinite(g)):
        raise EvaluationError("gradient evaluation produced non-finite components")
    return g


def _update_state(method: str, cfg: OptimizerConfig, vector, grad, state, epoch):
    lr = cfg.lr_at(epoch)
    if method == GD:
        return vector - lr * grad, state
    if method == MOMENTUM:
        m = cfg.momentum_beta * state["m"] + grad
        return vector - lr * m, {"m": m}
    b1, b2 = cfg.adam_betas
    m = b1 * state["m"] + (1 - b1) * grad
    v = b2 * state["v"] + (1 - b2) * grad**2
    t = epoch + 1
    mhat = m / (1 - b1**t)
    vhat = v / (1 - b2**t)
    return vector - lr * mhat / (np.sqrt(vhat) + 1e-12), {"m": m, "v": v}


def optimize(initial: ParamSet, loss: LossSpec, cfg: OptimizerConfig,
             experiment: Experiment, targets: dict,
             n_realizations: int | None = None, seed: int | None = None,
             callback=None) -> tuple[ParamSet, TrainingHistory]:
    """Minimize the loss over the learnable scalars of ``initial``.

    Returns the best-so-far parameters (never worse than the initial
    point) together with the full training history. Raises
    DivergenceError — history attached — if the loss stays above
    ``divergence_factor`` times the initial loss for ``patience``
    consecutive epochs.
    """
    vector, names = initial.flatten()
    if not names:
        raise ConfigError("nothing to optimize: no learnable scalars")
    experiment = experiment.with_params(initial)  # masks define the free vector
    history = TrainingHistory(scalar_names=names)
    n = experiment.spec.n_realizations if n_realizations is None else n_realizations
    seed = experiment.spec.seed if seed is None else seed

    def loss_for_epoch(epoch: int):
        offset = epoch * n if cfg.noise_policy == RESAMPLED_NOISE else 0
        return experiment.loss_function(loss, targets, n_realizations=n, seed=seed,
                                        stream_offset=offset)

    fn = loss_for_epoch(0)
    state = {"m": np.zeros_like(vector), "v": np.zeros_like(vector)}
    best_vector, best_loss = vector.copy(), np.inf
    initial_loss = None
    stale, too_high = 0, 0
    t0 = time.monotonic()
    for epoch in range(cfg.max_epochs):
        if cfg.noise_policy == RESAMPLED_NOISE and epoch > 0:
            fn = loss_for_epoch(epoch)
        if cfg.gradient_mode == ADJOINT:
            value, grad = fn.value_and_grad(vector)
        else:
            value = float(fn(vector))
            grad = _fd_grad(fn, vector, cfg.fd_step)
        if not np.isfinite(value):
            raise EvaluationError(f"loss is non-finite at epoch {epoch}")
        history.append(epoch, value, vector, time.monotonic() - t0)
        if callback is not None:
            callback(epoch, value, vector)
        if initial_loss is None:
            initial_loss = value
        if value < best_loss - cfg.tolerance:
            best_loss, best_vector = value, vector.copy()
            stale = 0
        else:
            if value < best_loss:
                best_loss, best_vector = value, vector.copy()
            stale += 1
        too_high = too_high + 1 if value > cfg.divergence_factor * max(initial_loss, 1e-300) \
            else 0
        if too_high >= cfg.patience:
            history.final_vector = best_vector
            raise DivergenceError(
                f"loss exceeded {cfg.divergence_factor}x the initial value for "
                f"{cfg.patience} consecutive epochs", history=history)
        if stale >= cfg.patience:
            break
        vector, state = _update_state(cfg.method, cfg, vector, grad, state, epoch)
    history.final_vector = best_vector
    return initial.with_vector(best_vector), history


def _fd_grad(fn, vector, step) -> np.ndarray:
    g = np.empty_like(vector)
    for k in range(len(vector)):
        vp = vector.copy()
        vp[k] += step
        vm = vector.copy()
        vm[k] -= step
        g[k] = (float(fn(vp)) - float(fn(vm))) / (2.0 * step)
    if not np.all(np.isfinite(g)):
        raise EvaluationError("finite-difference gradient is non-finite")
    return g


def perturb_crystal(theta: ParamSet, sigma: float, mode: str = "multiplicative",
                    seed: int = 0) -> ParamSet:
    """Inject normally distributed fabrication errors into crystal coefficients.

    multiplicative: alpha -> alpha * (1 + delta) with real delta ~ N(0, sigma^2);
    zero coefficients stay zero, so the structure remains in its modal subspace.
    additive: alpha -> alpha + (delta_re + i delta_im), each N(0, sigma^2),
    which can populate previously empty modes.
    """
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    if mode not in ("multiplicative", "additive"):
        raise ConfigError(f"unknown perturbation mode {mode!r}")
    if theta.crystal_coeffs is None:
        raise ConfigError("theta carries no crystal coefficients to perturb")
    g = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed)))
    coeffs = theta.crystal_coeffs.copy()
    if mode == "multiplicative":
        coeffs = coeffs * (1.0 + sigma * g.standard_normal(coeffs.shape))
    else:
        coeffs = coeffs + sigma * (g.standard_normal(coeffs.shape)
                                   + 1j * g.standard_normal(coeffs.shape))
    return replace(theta, crystal_coeffs=coeffs)


def recover_by_waist(perturbed: ParamSet, loss: LossSpec, cfg: OptimizerConfig,
                     experiment: Experiment, targets: dict,
                     original_loss: float | None = None,
                     n_realizations: int | None = None,
                     seed: int | None = None) -> tuple[ParamSet, dict]:
    """Re-optimize the pump waist alone on top of a perturbed crystal.

    Every other parameter is frozen. Returns the recovered parameters and
    the loss triple {original, perturbed, recovered}.
    """
    masks = {
        "learn_pump_coeffs": np.zeros_like(perturbed.learn_pump_coeffs),
        "learn_pump_waists": np.ones_like(perturbed.learn_pump_waists),
    }
    if perturbed.crystal_coeffs is not None:
        masks["learn_crystal_coeffs"] = np.zeros_like(perturbed.learn_crystal_coeffs)
        masks["learn_crystal_waists"] = np.zeros_like(perturbed.learn_crystal_waists)
    waist_only = replace(perturbed, **masks)
    experiment = experiment.with_params(waist_only)
    fn = experiment.loss_function(loss, targets, n_realizations=n_realizations, seed=seed)
    perturbed_loss = float(fn(waist_only.flatten()[0]))
    recovered, history = optimize(waist_only, loss, cfg, experiment, targets,
                                  n_realizations=n_realizations, seed=seed)
    report = {
        "original_loss": None if original_loss is None else float(original_loss),
        "perturbed_loss": perturbed_loss,
        "recovered_loss": float(history.best()["loss"]),
    }
    return recovered, report
