"""scikit-learn style wrappers around the sampler, the graph projection and the graph limit.

The sampler is unsupervised: ``fit(X)`` takes the initial states of the
replicates (one row each; ``None`` starts every replicate at the origin)
and stores ensemble statistics as fitted attributes. ``ReebProjector`` is a
transformer from states to ``[energy, edge]`` rows.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .graph.critical import find_critical_points
from .graph.reeb import build_reeb_graph
from .graph_limit import build_graph_limit, simulate_y
from .integrators import IntegratorParams
from .potentials import j_drift
from .quadrature import gibbs_average
from .sampler import SamplingConfig, replicate_ensemble
from .validation import (
    check_nonnegative_int,
    check_positive,
    check_scheme,
    check_states,
    resolve_observable,
    resolve_potential,
)

__all__ = ["LangevinSampler", "ReebProjector", "GraphLimitDiffusion"]


class LangevinSampler(BaseEstimator):
    """Ensemble of irreversible Langevin time averages (EM or HMM).

    Fitted attributes: ``true_average_``, ``summary_``, ``time_averages_``,
    ``err_``, ``avar_``, ``diverged_``.
    """

    def __init__(self, potential="double_well", scheme="hmm", eps=1e-2, tau=5e-4, delta=5e-3, beta=0.1,
                 observable="x_plus_y2", T_total=2000.0, T_burn=20.0, n_batches=20, n_replicates=200,
                 avar_normalization="batch", true_average=None, seed=0, n_jobs=1):
        self.potential = potential
        self.scheme = scheme
        self.eps = eps
        self.tau = tau
        self.delta = delta
        self.beta = beta
        self.observable = observable
        self.T_total = T_total
        self.T_burn = T_burn
        self.n_batches = n_batches
        self.n_replicates = n_replicates
        self.avar_normalization = avar_normalization
        self.true_average = true_average
        self.seed = seed
        self.n_jobs = n_jobs

    def _params(self):
        check_scheme(self.scheme)
        # the micro step is unused by Euler-Maruyama; any admissible value will do
        tau = self.tau if self.scheme == "hmm" else min(self.tau or self.delta, self.delta)
        return IntegratorParams(eps=self.eps, tau=tau, delta=self.delta, beta=self.beta, seed=self.seed)

    def fit(self, X=None, y=None):
        potential = resolve_potential(self.potential)
        resolve_observable(self.observable)
        params = self._params()
        n = check_nonnegative_int(self.n_replicates, "n_replicates")
        z0 = None
        if X is not None:
            z0 = check_states(X, potential.dimension)
            if len(z0) not in (1, n):
                raise ValueError(f"X must have 1 or n_replicates={n} rows, got {len(z0)}")
        cfg = SamplingConfig(T_total=self.T_total, T_burn=self.T_burn, n_batches=self.n_batches,
                             n_replicates=n, observable=self.observable,
                             avar_normalization=self.avar_normalization)
        if self.true_average is None:
            self.true_average_ = gibbs_average(potential, self.beta, self.observable)
        else:
            self.true_average_ = float(self.true_average)
        self.summary_ = replicate_ensemble(self.scheme, params, cfg, potential, j_drift(potential),
                                           self.true_average_, z0=z0, n_jobs=self.n_jobs)
        self.time_averages_ = self.summary_.time_averages
        self.err_ = self.summary_.errs
        self.avar_ = self.summary_.avars
        self.diverged_ = self.summary_.diverged
        return self

    def summary_row(self):
        check_is_fitted(self, "summary_")
        return self.summary_.as_row()


class ReebProjector(TransformerMixin, BaseEstimator):
    """Projection ``z -> (U(z), edge)`` onto the Reeb graph of a 2D potential."""

    def __init__(self, potential="double_well", resolution=1024, zeta_res=1e-3):
        self.potential = potential
        self.resolution = resolution
        self.zeta_res = zeta_res

    def fit(self, X=None, y=None):
        potential = resolve_potential(self.potential)
        check_positive(self.zeta_res, "zeta_res")
        self.critical_points_ = find_critical_points(potential)
        self.graph_ = build_reeb_graph(potential, self.critical_points_, resolution=self.resolution,
                                       zeta_res=self.zeta_res)
        self.n_edges_ = self.graph_.n_edges
        return self

    def transform(self, X):
        """Rows ``[energy, edge]``; the edge is ``-1`` within ``zeta_res`` of a vertex."""
        check_is_fitted(self, "graph_")
        Z = check_states(X, 2)
        x, edge = self.graph_.project(Z)
        return np.column_stack([x, edge.astype(float)])


class GraphLimitDiffusion(BaseEstimator):
    """Limiting energy diffusion on the Reeb graph (averaged coefficients and gluing)."""

    def __init__(self, potential="double_well", beta=0.1, n_energies=41, zeta_res=1e-3, n_jobs=1):
        self.potential = potential
        self.beta = beta
        self.n_energies = n_energies
        self.zeta_res = zeta_res
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        potential = resolve_potential(self.potential)
        check_positive(self.beta, "beta")
        self.model_ = build_graph_limit(potential, self.beta, n_energies=self.n_energies,
                                        zeta_res=self.zeta_res, n_jobs=self.n_jobs)
        self.graph_ = self.model_.graph
        self.gluing_ = self.model_.gluing
        return self

    def sample(self, x0, edge0, T, n_samples, seed=0, dt_edge=1e-3, dt_vertex=1e-4):
        """Final ``(energy, edge)`` of ``n_samples`` copies started at ``(x0, edge0)``."""
        check_is_fitted(self, "model_")
        state = simulate_y(self.model_, x0, edge0, T, n_samples=n_samples, seed=seed, dt_edge=dt_edge,
                           dt_vertex=dt_vertex)
        return state.x, state.edge
