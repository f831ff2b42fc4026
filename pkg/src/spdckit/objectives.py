"""Discrepancy measures between observable sets, and their weighted sums.

Conventions: the KL term in a composite loss is evaluated target-first,
D_KL(target || produced), so entries the target assigns zero mass
contribute nothing directly and the measure stays small once the produced
distribution covers the target support. The smoothing floor keeps every
term finite and differentiable when distributions carry exact zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import jax.numpy as jnp
import numpy as np

from .errors import ConfigError, GridMismatchError, NormalizationError

KL = "kl"
L1 = "l1"
TRACE_DISTANCE = "trace_distance"
_KINDS = (KL, L1, TRACE_DISTANCE)

#: smoothing floor applied to the second argument of the KL divergence
KL_EPSILON = 1e-10


def _as_matrix(x):
    return jnp.asarray(getattr(x, "values", getattr(x, "rho", x)))


def _check_normalized(p, name: str) -> None:
    total = float(jnp.sum(p))
    if abs(total - 1.0) > 1e-6:
        raise NormalizationError(f"{name} must be normalized (sum = {total:.6g})")


def kl_divergence(p, q) -> float:
    """Kullback-Leibler divergence sum(p * log(p / q)) between normalized tables."""
    p = _as_matrix(p)
    q = _as_matrix(q)
    if p.shape != q.shape:
        raise GridMismatchError(f"shape mismatch {p.shape} vs {q.shape}")
    _check_normalized(p, "p")
    _check_normalized(q, "q")
    return float(_kl(p, q))


def _kl(p, q):
    q = jnp.clip(q, KL_EPSILON, None)
    terms = jnp.where(p > 0, p * (jnp.log(jnp.clip(p, KL_EPSILON, None)) - jnp.log(q)), 0.0)
    return jnp.sum(terms)


def l1_distance(p, q) -> float:
    """Sum of absolute element-wise differences."""
    p = _as_matrix(p)
    q = _as_matrix(q)
    if p.shape != q.shape:
        raise GridMismatchError(f"shape mismatch {p.shape} vs {q.shape}")
    return float(jnp.sum(jnp.abs(p - q)))


def trace_distance(rho1, rho2) -> float:
    """Half the sum of absolute eigenvalues of the difference of two states."""
    r1 = np.asarray(getattr(rho1, "rho", rho1))
    r2 = np.asarray(getattr(rho2, "rho", rho2))
    if r1.shape != r2.shape:
        raise GridMismatchError(f"shape mismatch {r1.shape} vs {r2.shape}")
    for name, r in (("rho1", r1), ("rho2", r2)):
        if np.max(np.abs(r - r.conj().T)) > 1e-8:
            raise ConfigError(f"{name} is not Hermitian")
    return float(_trace_distance(jnp.asarray(r1), jnp.asarray(r2)))


def _trace_distance(r1, r2):
    eigs = jnp.linalg.eigvalsh(r1 - r2)
    return 0.5 * jnp.sum(jnp.abs(eigs))


@dataclass(frozen=True)
class LossTerm:
    """One weighted discrepancy term against a named target observable."""

    kind: str
    weight: float = 1.0
    target: str = "g2"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}; expected one of {_KINDS}")
        if not np.isfinite(self.weight) or self.weight < 0:
            raise ConfigError(f"loss weight must be finite and >= 0, got {self.weight}")
        if self.kind == TRACE_DISTANCE and self.target == "g2":
            raise ConfigError("trace_distance applies to density-matrix targets")


@dataclass(frozen=True)
class LossSpec:
    """Weighted ensemble of discrepancy terms."""

    terms: tuple[LossTerm, ...] = field(default_factory=tuple)

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ConfigError("a loss needs at least one term")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def default_g2(cls, kl_weight: float = 1.0, l1_weight: float = 0.5) -> "LossSpec":
        return cls(terms=(LossTerm(KL, kl_weight, "g2"), LossTerm(L1, l1_weight, "g2")))

    def targets_needed(self) -> set[str]:
        return {t.target for t in self.terms}


def term_value(term: LossTerm, produced, target):
    """Traced value of one term; produced/target are raw arrays."""
    if term.kind == KL:
        return _kl(jnp.asarray(target), jnp.asarray(produced))
    if term.kind == L1:
        return jnp.sum(jnp.abs(jnp.asarray(produced) - jnp.asarray(target)))
    return _trace_distance(jnp.asarray(produced), jnp.asarray(target))


def composite_loss(spec: LossSpec, produced: dict, targets: dict) -> float:
    """Weighted sum of all loss terms.

    ``produced`` and ``targets`` map observable names ("g2", "rho") to
    matrices (or their dataclass wrappers). Coincidence inputs must
    already be normalized.
    """
    total = 0.0
    for term in spec.terms:
        if term.target not in targets or targets[term.target] is None:
            raise ConfigError(f"loss term {term.kind} needs missing target {term.target!r}")
        if term.target not in produced:
            raise ConfigError(f"produced observables lack {term.target!r}")
        p = _as_matrix(produced[term.target])
        t = _as_matrix(targets[term.target])
        if term.kind == KL:
            _check_normalized(p, "produced")
            _check_normalized(t, "target")
        total = total + term.weight * term_value(term, p, t)
    return float(total)
