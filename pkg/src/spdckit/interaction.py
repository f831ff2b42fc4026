"""Physical constants of one SPDC interaction and deterministic randomness.

All field amplitudes in the package are dimensionless; the physical
prefactors of the nonlinear coupling are folded into the single scalar
``gain`` carried here (``chi2_magnitude``). Wavenumbers include the
refractive index of the (uniform-index) medium.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class InteractionSpec:
    """Wavelengths, wavenumbers and discretization of one interaction.

    ``delta_k`` defaults to the collinear mismatch ``k_p - k_s - k_i`` but
    may be overridden (e.g. to study quasi-phase-matching at an imposed
    mismatch).
    """

    lambda_p: float
    lambda_s: float
    lambda_i: float
    k_p: float
    k_s: float
    k_i: float
    L: float
    n_z: int
    delta_k: float
    chi2_magnitude: float = 1.0
    poling_period: float | None = None
    n_realizations: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.L <= 0:
            raise ConfigError(f"crystal length must be positive, got {self.L}")
        if self.n_z < 1:
            raise ConfigError(f"need at least one propagation step, got n_z={self.n_z}")
        if self.n_realizations < 2:
            raise ConfigError(
                f"ensemble averaging needs >= 2 realizations, got {self.n_realizations}"
            )
        if self.poling_period is not None and self.poling_period <= 0:
            raise ConfigError(f"poling period must be positive, got {self.poling_period}")
        if min(self.lambda_p, self.lambda_s, self.lambda_i) <= 0:
            raise ConfigError("wavelengths must be positive")
        resid = abs(1.0 / self.lambda_p - 1.0 / self.lambda_s - 1.0 / self.lambda_i)
        if resid > 1e-12 / self.lambda_p:
            raise ConfigError(
                "energy conservation violated: 1/lambda_p != 1/lambda_s + 1/lambda_i "
                f"(relative residual {resid * self.lambda_p:.3e})"
            )

    @classmethod
    def collinear(cls, lambda_p: float, refractive_index: float, L: float, n_z: int,
                  lambda_s: float | None = None, delta_k: float | None = None,
                  **kwargs) -> "InteractionSpec":
        """Degenerate (or near-degenerate) collinear interaction in a uniform
        medium of the given refractive index."""
        lambda_s = 2.0 * lambda_p if lambda_s is None else lambda_s
        lambda_i = 1.0 / (1.0 / lambda_p - 1.0 / lambda_s)
        k_p = TWO_PI * refractive_index / lambda_p
        k_s = TWO_PI * refractive_index / lambda_s
        k_i = TWO_PI * refractive_index / lambda_i
        if delta_k is None:
            delta_k = k_p - k_s - k_i
        return cls(lambda_p=lambda_p, lambda_s=lambda_s, lambda_i=lambda_i,
                   k_p=k_p, k_s=k_s, k_i=k_i, L=L, n_z=n_z, delta_k=delta_k, **kwargs)

    @property
    def dz(self) -> float:
        return self.L / self.n_z

    @property
    def zeta_midpoints(self) -> np.ndarray:
        """Midpoint of every propagation step, measured from the input facet."""
        return (np.arange(self.n_z) + 0.5) * self.dz

    def with_(self, **changes) -> "InteractionSpec":
        return replace(self, **changes)


@dataclass(frozen=True)
class RngStream:
    """One deterministic random stream, keyed by (seed, stream_id).

    Identical keys reproduce identical draws bit-exactly regardless of how
    realizations are batched across workers; each vacuum realization owns
    stream_id = its realization index.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def complex_normal(self, shape, scale: float = 1.0) -> np.ndarray:
        """Circular complex Gaussian with E[|z|^2] = scale**2 per entry."""
        g = self.generator()
        z = g.standard_normal(shape) + 1j * g.standard_normal(shape)
        return (scale / np.sqrt(2.0)) * z
