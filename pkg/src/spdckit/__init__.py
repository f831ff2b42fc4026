"""Simulation and gradient-based inverse design of structured SPDC sources."""

import jax

# Double precision everywhere: moment estimators and gradient checks
# downstream depend on it. Must run before any array is created.
jax.config.update("jax_enable_x64", True)

from .errors import (ConfigError, DegenerateInputError, DivergenceError,  # noqa: E402
                     EstimatorError, GridMismatchError, MissingProjectionError,
                     NormalizationError, NumericBlowupError, SpdcError,
                     UnsupportedDimensionError)
from .grids import (ComplexField, TransverseGrid, grid_for_waist, inner_product,  # noqa: E402
                    make_grid, zero_field)
from .interaction import InteractionSpec, RngStream  # noqa: E402
from .modes import (ModeBasis, ModeIndex, decompose, hg_mode, lg_mode,  # noqa: E402
                    mode_field, synthesize)
from .structure import (CrystalSlice, ParamSet, build_crystal, build_pump,  # noqa: E402
                        crystal_stack, poling_carrier)
from .solver import (EnsembleState, init_vacuum, linear_half_step, load_state,  # noqa: E402
                     nonlinear_step, project_ensemble, propagate, save_state)
from .observables import (CoincidenceMatrix, DensityMatrix, MomentSet,  # noqa: E402
                          ProjectionData, analytic_projections, estimate_moments,
                          g2_from_moments, generators, mass_by_oam_sum, mub_projectors,
                          reconstruct_density, simulated_projection,
                          tomography_projections)
from .objectives import (KL, L1, TRACE_DISTANCE, LossSpec, LossTerm,  # noqa: E402
                         composite_loss, kl_divergence, l1_distance, trace_distance)
from .oracle import PairAmplitude, oracle_g2, perturbative_amplitude  # noqa: E402
from .experiment import Experiment  # noqa: E402
from .inverse import (OptimizerConfig, TrainingHistory, gradient, optimize,  # noqa: E402
                      perturb_crystal, recover_by_waist)
from .estimators import SpdcSimulator, SpdcInverseDesigner  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "ComplexField", "TransverseGrid", "grid_for_waist", "inner_product", "make_grid",
    "zero_field", "InteractionSpec", "RngStream", "ModeBasis", "ModeIndex", "decompose",
    "hg_mode", "lg_mode", "mode_field", "synthesize", "CrystalSlice", "ParamSet",
    "build_crystal", "build_pump", "crystal_stack", "poling_carrier", "EnsembleState",
    "init_vacuum", "linear_half_step", "load_state", "nonlinear_step", "project_ensemble",
    "propagate", "save_state", "CoincidenceMatrix", "DensityMatrix", "MomentSet",
    "ProjectionData", "analytic_projections", "estimate_moments", "g2_from_moments",
    "generators", "mass_by_oam_sum", "mub_projectors", "reconstruct_density",
    "simulated_projection", "tomography_projections", "KL", "L1", "TRACE_DISTANCE",
    "LossSpec", "LossTerm", "composite_loss", "kl_divergence", "l1_distance",
    "trace_distance", "PairAmplitude", "oracle_g2", "perturbative_amplitude",
    "Experiment", "OptimizerConfig", "TrainingHistory", "gradient", "optimize",
    "perturb_crystal", "recover_by_waist", "SpdcSimulator", "SpdcInverseDesigner",
    "SpdcError", "ConfigError", "DegenerateInputError", "DivergenceError",
    "EstimatorError", "GridMismatchError", "MissingProjectionError",
    "NormalizationError", "NumericBlowupError", "UnsupportedDimensionError",
]
