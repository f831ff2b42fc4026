"""Estimator-style wrappers so the toolkit composes with the ML ecosystem.

``SpdcSimulator`` is the forward model (predict a coincidence table from
a configured source); ``SpdcInverseDesigner`` is the trainable half
(fit the learnable source parameters to a target observable). Both
follow the scikit-learn contract: constructor arguments are stored
verbatim, fitted state lives in trailing-underscore attributes, and
``get_params``/``set_params`` come from BaseEstimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils import check_array

from .errors import ConfigError
from .experiment import Experiment
from .inverse import OptimizerConfig, optimize
from .objectives import LossSpec


def _validate_g2_target(target, shape) -> np.ndarray:
    values = getattr(target, "values", target)
    arr = check_array(np.asarray(values, dtype=np.float64), ensure_2d=True)
    if arr.shape != shape:
        raise ConfigError(f"target shape {arr.shape} does not match the "
                          f"measured coincidence shape {shape}")
    if np.any(arr < 0):
        raise ConfigError("coincidence targets must be non-negative")
    total = arr.sum()
    if total <= 0:
        raise ConfigError("coincidence target has no mass")
    return arr / total


class SpdcSimulator(BaseEstimator):
    """Forward simulator with a predict-shaped interface.

    Parameters
    ----------
    experiment : Experiment
        Fully configured interaction and measurement setup.
    n_realizations, seed : optional overrides of the experiment defaults.
    """

    def __init__(self, experiment: Experiment, n_realizations: int | None = None,
                 seed: int | None = None):
        self.experiment = experiment
        self.n_realizations = n_realizations
        self.seed = seed

    def fit(self, X=None, y=None):
        """Run the forward model and cache the observables."""
        obs = self.experiment.observables(n_realizations=self.n_realizations,
                                          seed=self.seed)
        self.moments_ = obs["moments"]
        self.g2_ = obs["g2"]
        self.g2_normalized_ = obs["g2_normalized"]
        self.rho_ = obs.get("rho")
        return self

    def _check_fitted(self):
        if not hasattr(self, "g2_"):
            raise NotFittedError("call fit() before querying the simulator")

    def predict(self, X=None) -> np.ndarray:
        """Normalized coincidence table of the configured source."""
        self._check_fitted()
        return np.asarray(self.g2_normalized_.values)

    def score(self, target, y=None) -> float:
        """Negative L1 distance between the prediction and a target table."""
        self._check_fitted()
        t = _validate_g2_target(target, self.predict().shape)
        return -float(np.abs(self.predict() - t).sum())


class SpdcInverseDesigner(BaseEstimator):
    """Learn source parameters that realize a target coincidence table.

    ``fit(target)`` optimizes the learnable scalars of the experiment's
    parameter set against the target; the learned parameters, training
    history and final observables are exposed as fitted attributes.
    """

    def __init__(self, experiment: Experiment, loss: LossSpec | None = None,
                 optimizer: OptimizerConfig | None = None,
                 target_rho: np.ndarray | None = None,
                 n_realizations: int | None = None, seed: int | None = None):
        self.experiment = experiment
        self.loss = loss
        self.optimizer = optimizer
        self.target_rho = target_rho
        self.n_realizations = n_realizations
        self.seed = seed

    def fit(self, target, y=None):
        exp = self.experiment
        loss = self.loss if self.loss is not None else LossSpec.default_g2()
        cfg = self.optimizer if self.optimizer is not None else OptimizerConfig()
        n_i, n_s = len(exp.idler_basis), len(exp.signal_basis)
        targets = {"g2": _validate_g2_target(target, (n_i, n_s))}
        if self.target_rho is not None:
            targets["rho"] = np.asarray(self.target_rho, dtype=np.complex128)
        theta, history = optimize(exp.params, loss, cfg, exp, targets,
                                  n_realizations=self.n_realizations, seed=self.seed)
        self.theta_ = theta
        self.history_ = history
        self.experiment_ = exp.with_params(theta)
        obs = self.experiment_.observables(n_realizations=self.n_realizations,
                                           seed=self.seed)
        self.g2_ = obs["g2_normalized"]
        self.rho_ = obs.get("rho")
        self.loss_ = history.best()["loss"]
        return self

    def _check_fitted(self):
        if not hasattr(self, "theta_"):
            raise NotFittedError("call fit(target) before querying the designer")

    def predict(self, X=None) -> np.ndarray:
        """Normalized coincidence table produced by the learned parameters."""
        self._check_fitted()
        return np.asarray(self.g2_.values)

    def score(self, target, y=None) -> float:
        """Negative final loss against the given target."""
        self._check_fitted()
        t = _validate_g2_target(target, self.predict().shape)
        return -float(np.abs(self.predict() - t).sum())
