"""One configured forward problem: parameters in, observables out.

The forward map is assembled as a pure function of the flattened
learnable parameter vector so it can be differentiated end to end:
pump/crystal synthesis -> split-step ensemble propagation -> modal
projection -> moment estimation -> coincidence table (and, when a
tomography block is configured, the reconstructed density matrix).

Vacuum noise is drawn per realization index from counter-based streams,
so results are bit-identical no matter how the ensemble is chunked;
chunking (``max_chunk``) only bounds memory. Forward-only runs stream
noise chunk by chunk and never materialize the whole ensemble; loss
functions hold their (smaller) ensemble in memory and pass it to the
compiled graph as runtime buffers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import jax
import jax.numpy as jnp
import numpy as np

from .errors import ConfigError
from .grids import TransverseGrid
from .interaction import InteractionSpec, RngStream
from .modes import ModeBasis
from .objectives import LossSpec, term_value
from .observables import (estimate_moments, g2_from_moments, moment_arrays,
                          tomography_kets, traced_rho)
from .solver import _diffraction_multipliers, _propagate_stacks, pump_slices
from .structure import ParamSet, build_pump, crystal_stack


@dataclass(frozen=True)
class TomographySetup:
    """Which measurement-basis slots span the reconstructed qudit pair."""

    idler_slots: tuple[int, ...]
    signal_slots: tuple[int, ...]

    def __post_init__(self):
        if len(self.idler_slots) != len(self.signal_slots):
            raise ConfigError("idler and signal tomography subspaces must match in size")
        if len(self.idler_slots) < 2:
            raise ConfigError("tomography needs a subspace dimension >= 2")

    @property
    def d(self) -> int:
        return len(self.idler_slots)


class CompiledLoss:
    """Scalar loss of the free parameter vector, with its exact gradient.

    Calling it evaluates the jitted forward map; ``value_and_grad`` runs
    the reverse-accumulated (adjoint) pass through the same graph. The
    vacuum ensemble is held as runtime buffers, so recompilation never
    happens across epochs.
    """

    def __init__(self, raw_fn, chunks):
        self._chunks = chunks
        self._value = jax.jit(raw_fn)
        self._vg = None
        self._raw = raw_fn

    def __call__(self, vector) -> float:
        return float(self._value(jnp.asarray(vector, dtype=jnp.float64), self._chunks))

    def value_and_grad(self, vector) -> tuple[float, np.ndarray]:
        if self._vg is None:
            self._vg = jax.jit(jax.value_and_grad(self._raw))
        value, grad = self._vg(jnp.asarray(vector, dtype=jnp.float64), self._chunks)
        return float(value), np.asarray(grad, dtype=np.float64)

    def grad(self, vector) -> np.ndarray:
        return self.value_and_grad(vector)[1]


@dataclass
class Experiment:
    """A fully specified interaction plus its measurement configuration."""

    grid: TransverseGrid
    spec: InteractionSpec
    pump_basis: ModeBasis
    signal_basis: ModeBasis
    idler_basis: ModeBasis
    params: ParamSet
    crystal_basis: ModeBasis | None = None
    noise_scale: float = 1.0
    pump_diffraction: bool = True
    project_at: str = "center"
    max_chunk: int = 256
    tomography: TomographySetup | None = None

    def __post_init__(self):
        for name, basis in (("pump", self.pump_basis), ("signal", self.signal_basis),
                            ("idler", self.idler_basis), ("crystal", self.crystal_basis)):
            if basis is not None and basis.grid != self.grid:
                raise ConfigError(f"{name} basis lives on a different grid")
        if len(self.params.pump_coeffs) != len(self.pump_basis):
            raise ConfigError("pump coefficient count does not match the pump basis")
        if (self.params.crystal_coeffs is None) != (self.crystal_basis is None):
            raise ConfigError("crystal coefficients and crystal basis must come together")
        if self.params.crystal_coeffs is not None and \
                self.params.crystal_coeffs.shape[1] != len(self.crystal_basis):
            raise ConfigError("crystal coefficient count does not match the crystal basis")
        if self.project_at not in ("center", "facet"):
            raise ConfigError(f"project_at must be 'center' or 'facet', got {self.project_at!r}")
        if self.max_chunk < 1:
            raise ConfigError("max_chunk must be >= 1")
        if self.tomography is not None:
            nt = len(self.idler_basis)
            ns = len(self.signal_basis)
            if max(self.tomography.idler_slots) >= nt or max(self.tomography.signal_slots) >= ns:
                raise ConfigError("tomography slots outside the measurement bases")

    # -- noise -----------------------------------------------------------------

    def noise_chunks(self, n: int, seed: int, stream_offset: int = 0):
        """Yield initial (4, nc, nx, ny) field stacks, chunked for memory.

        Stack order matches the solver: signal_out (zero), signal_vac,
        idler_out (zero), idler_vac. Realization r draws its signal noise
        then its idler noise from stream (seed, stream_offset + r), so the
        ensemble is independent of the chunk layout.
        """
        scale = self.noise_scale / np.sqrt(self.grid.cell_area)
        for lo in range(0, n, self.max_chunk):
            nc = min(self.max_chunk, n - lo)
            stacked = np.zeros((4, nc, self.grid.nx, self.grid.ny), dtype=np.complex128)
            for r in range(nc):
                g = RngStream(seed, stream_offset + lo + r).generator()
                z = g.standard_normal((4, self.grid.nx, self.grid.ny))
                stacked[1, r] = (scale / np.sqrt(2.0)) * (z[0] + 1j * z[1])
                stacked[3, r] = (scale / np.sqrt(2.0)) * (z[2] + 1j * z[3])
            yield stacked

    # -- differentiable forward map ---------------------------------------------

    def _solver_constants(self):
        half = _diffraction_multipliers(self.grid, self.spec.k_s, self.spec.k_i,
                                        0.5 * self.spec.dz)
        full = _diffraction_multipliers(self.grid, self.spec.k_s, self.spec.k_i, self.spec.dz)
        phases = (jnp.exp(-1j * self.spec.delta_k * jnp.asarray(self.spec.zeta_midpoints))
                  * self.spec.dz)
        # trailing corrector; imaging the output plane back to the crystal
        # center (the detection-mode waist plane) folds into the same multiply
        back = -0.5 * self.spec.L if self.project_at == "center" else 0.0
        final = _diffraction_multipliers(self.grid, self.spec.k_s, self.spec.k_i,
                                         -0.5 * self.spec.dz + back)
        return half, full, phases, final

    def _mode_matrices(self):
        ms = jnp.asarray(self.signal_basis.stack().reshape(len(self.signal_basis), -1)).conj().T
        mi = jnp.asarray(self.idler_basis.stack().reshape(len(self.idler_basis), -1)).conj().T
        return ms, mi

    def _fields_from_arrays(self, arrays: dict):
        pump = build_pump(arrays["pump_coeffs"], arrays["pump_waists"], self.pump_basis)
        pumps = pump_slices(pump, self.spec, self.pump_diffraction)
        chi = crystal_stack(arrays.get("crystal_coeffs"), arrays.get("crystal_waists"),
                            self.crystal_basis, self.spec, self.grid)
        return pump, pumps, chi

    def _chunk_coefficients(self, stacked0, chi, pumps, phases, consts):
        half, full, final, ms, mi = consts
        out = _propagate_stacks(stacked0, chi, pumps, phases, half, full, self.spec.n_z,
                                final_mult=final)
        flat = out.reshape(4, out.shape[1], -1)
        area = self.grid.cell_area
        return jnp.stack([flat[0] @ ms * area, flat[1] @ ms * area,
                          flat[2] @ mi * area, flat[3] @ mi * area], axis=0)

    def _coefficients_streaming(self, arrays: dict, n: int, seed: int,
                                stream_offset: int = 0) -> dict:
        """Concrete coefficient stacks for a (possibly large) ensemble."""
        _, pumps, chi = self._fields_from_arrays(arrays)
        half, full, phases, final = self._solver_constants()
        ms, mi = self._mode_matrices()
        consts = (half, full, final, ms, mi)
        parts = [np.asarray(self._chunk_coefficients(jnp.asarray(c), chi, pumps, phases, consts))
                 for c in self.noise_chunks(n, seed, stream_offset)]
        joined = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)
        return {"signal_out": joined[0], "signal_vac": joined[1],
                "idler_out": joined[2], "idler_vac": joined[3]}

    def produced_from_coeffs(self, coeffs: dict, want_rho: bool = False) -> dict:
        """Raw observable arrays from coefficient stacks (traceable)."""
        n_s, n_i, a, c = moment_arrays(coeffs)
        g2 = (jnp.real(jnp.diag(n_i))[:, None] * jnp.real(jnp.diag(n_s))[None, :]
              + jnp.abs(a) ** 2 + jnp.abs(c) ** 2)
        out = {"moments": (n_s, n_i, a, c), "g2_raw": g2, "g2": g2 / jnp.sum(g2)}
        if want_rho:
            if self.tomography is None:
                raise ConfigError("no tomography block configured")
            kets_i, kets_s, eigvals, sigma_kron = tomography_kets(
                self.tomography.d, self.tomography.idler_slots,
                self.tomography.signal_slots, len(self.idler_basis),
                len(self.signal_basis))
            out["rho"] = traced_rho(n_s, n_i, a, c, kets_i, kets_s, eigvals, sigma_kron,
                                    self.tomography.d)
        return out

    # -- public forward runs ------------------------------------------------------

    def observables(self, params: ParamSet | None = None, n_realizations: int | None = None,
                    seed: int | None = None, stream_offset: int = 0) -> dict:
        """Run the forward model and wrap the results in observable types."""
        params = self.params if params is None else params
        n = self.spec.n_realizations if n_realizations is None else n_realizations
        seed = self.spec.seed if seed is None else seed
        arrays = {"pump_coeffs": jnp.asarray(params.pump_coeffs),
                  "pump_waists": jnp.asarray(params.pump_waists)}
        if params.crystal_coeffs is not None:
            arrays["crystal_coeffs"] = jnp.asarray(params.crystal_coeffs)
            arrays["crystal_waists"] = jnp.asarray(params.crystal_waists)
        coeffs = self._coefficients_streaming(arrays, n, seed, stream_offset)
        moments = estimate_moments(coeffs, signal_labels=self.signal_basis.labels,
                                   idler_labels=self.idler_basis.labels)
        g2 = g2_from_moments(moments)
        result = {"moments": moments, "g2": g2, "g2_normalized": g2.normalize()}
        if self.tomography is not None:
            from .observables import reconstruct_density, tomography_projections
            proj = tomography_projections(moments, self.tomography.idler_slots,
                                          self.tomography.signal_slots)
            result["rho"] = reconstruct_density(
                proj,
                idler_levels=tuple(self.idler_basis.labels[k]
                                   for k in self.tomography.idler_slots),
                signal_levels=tuple(self.signal_basis.labels[k]
                                    for k in self.tomography.signal_slots))
        return result

    # -- loss ----------------------------------------------------------------------

    def loss_function(self, loss_spec: LossSpec, targets: dict,
                      n_realizations: int | None = None, seed: int | None = None,
                      stream_offset: int = 0, checkpointed: bool = False) -> CompiledLoss:
        """Compiled scalar loss of the free parameter vector.

        Targets are raw arrays: a normalized coincidence table under
        "g2", a density matrix under "rho". The loss ensemble is drawn
        once, kept as device buffers, and reused for every evaluation.
        """
        for name in loss_spec.targets_needed():
            if targets.get(name) is None:
                raise ConfigError(f"loss requires a {name!r} target")
        n = self.spec.n_realizations if n_realizations is None else n_realizations
        seed = self.spec.seed if seed is None else seed
        want_rho = "rho" in loss_spec.targets_needed()
        tgt = {k: (None if v is None else jnp.asarray(getattr(v, "values", getattr(v, "rho", v))))
               for k, v in targets.items()}
        chunks = tuple(jnp.asarray(c) for c in self.noise_chunks(n, seed, stream_offset))
        template = self.params
        half, full, phases_c, final = self._solver_constants()
        ms, mi = self._mode_matrices()
        consts = (half, full, final, ms, mi)

        def raw(vector, chunks_):
            arrays = template.unflatten(vector)
            _, pumps, chi = self._fields_from_arrays(arrays)

            def run_chunk(stacked0):
                return self._chunk_coefficients(stacked0, chi, pumps, phases_c, consts)

            body = jax.checkpoint(run_chunk) if checkpointed and len(chunks_) > 1 else run_chunk
            parts = [body(c) for c in chunks_]
            joined = parts[0] if len(parts) == 1 else jnp.concatenate(parts, axis=1)
            coeffs = {"signal_out": joined[0], "signal_vac": joined[1],
                      "idler_out": joined[2], "idler_vac": joined[3]}
            produced = self.produced_from_coeffs(coeffs, want_rho=want_rho)
            total = 0.0
            for term in loss_spec.terms:
                total = total + term.weight * term_value(term, produced[term.target],
                                                         tgt[term.target])
            return total

        return CompiledLoss(raw, chunks)

    def with_params(self, params: ParamSet) -> "Experiment":
        return replace(self, params=params)
