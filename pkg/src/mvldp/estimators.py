"""scikit-learn style wrappers around the simulation and rate tools."""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .events import parse_event
from .exceptions import ParameterError
from .measure_ops import _fast_uniform
from .model import get_model
from .mvsde_solver import simulate_frozen, simulate_particles
from .path_space import TimeGrid, holder_norm_batch, sup_norm_batch
from .skeleton_rate import rate_of_event


class ParticleSimulator(BaseEstimator):
    """Fits the law flow of a model by an interacting particle system started at X.

    After fit, transform(X) runs independent copies from new initial states
    in the fitted law flow and returns their terminal states.
    """

    def __init__(self, model="mfou", epsilon=1.0, n_steps=256, horizon=1.0, seed=0):
        self.model = model
        self.epsilon = epsilon
        self.n_steps = n_steps
        self.horizon = horizon
        self.seed = seed

    def _coefficients(self):
        return get_model(self.model).coefficients

    def fit(self, X, y=None):
        cs = self._coefficients()
        X = check_array(X, ensure_min_samples=2)
        if X.shape[1] != cs.dim_x:
            raise ParameterError(f"X must have {cs.dim_x} columns")
        if self.epsilon < 0:
            raise ParameterError("epsilon must be nonnegative")
        grid = TimeGrid(self.horizon, self.n_steps)
        ps = simulate_particles(cs, X, X.shape[0], grid, self.epsilon, self.seed)
        self.paths_ = ps.paths
        self.grid_ = grid
        self.n_features_in_ = X.shape[1]
        return self

    def law_flow(self):
        check_is_fitted(self, "paths_")
        return [_fast_uniform(self.paths_[:, k]) for k in range(self.grid_.n_steps + 1)]

    def transform(self, X):
        check_is_fitted(self, "paths_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ParameterError("X has the wrong number of columns")
        reps = np.arange(X.shape[0]) + self.paths_.shape[0]
        return simulate_frozen(self._coefficients(), X, self.law_flow(), self.grid_, self.epsilon,
                               self.seed, reps, tag="transform", record=False)


class PathNormTransformer(TransformerMixin, BaseEstimator):
    """Maps grid paths (P, n+1) or (P, n+1, d) on [0, horizon] to [sup norm, Hölder seminorm]."""

    def __init__(self, alpha=0.3, horizon=1.0):
        self.alpha = alpha
        self.horizon = horizon

    def fit(self, X, y=None):
        v = self._values(X)
        self.n_nodes_ = v.shape[1]
        return self

    def _values(self, X):
        v = np.asarray(X, dtype=float)
        if v.ndim == 2:
            v = check_array(v)[..., None]
        if v.ndim != 3 or v.shape[1] < 3:
            raise ParameterError("paths must have shape (P, n+1) or (P, n+1, d) with n >= 2")
        return v

    def transform(self, X):
        check_is_fitted(self, "n_nodes_")
        v = self._values(X)
        dt = self.horizon / (v.shape[1] - 1)
        return np.column_stack([sup_norm_batch(v), holder_norm_batch(v, dt, self.alpha)])


class EventRateEstimator(BaseEstimator):
    """predict(events) returns upper bounds on the rate of each event string."""

    def __init__(self, model="brownian", x0=0.0, n_steps=64, horizon=1.0, budget=300, starts=5, seed=0):
        self.model = model
        self.x0 = x0
        self.n_steps = n_steps
        self.horizon = horizon
        self.budget = budget
        self.starts = starts
        self.seed = seed

    def fit(self, X=None, y=None):
        self.coefficients_ = get_model(self.model).coefficients
        return self

    def predict(self, events):
        check_is_fitted(self, "coefficients_")
        return np.array([rate_of_event(self.coefficients_, self.x0, parse_event(e), budget=self.budget,
                                       n_steps=self.n_steps, horizon=self.horizon, seed=self.seed,
                                       starts=self.starts).value for e in events])
