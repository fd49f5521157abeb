"""Simulation of the limiting energy diffusion on the Reeb graph and comparison with HMM.

Inside edge ``i`` the energy follows ``dx = L0U_hat(x, i) dt + sqrt(A_hat(x, i)) dW``.
At an interior vertex the process branches: a step that reaches the vertex
(comes within ``zeta_res`` of its energy or jumps past it) picks an exit edge
``i`` with probability ``p_ji`` among all incident edges, and the overshoot
``|x' - U(O_j)|`` (at least ``zeta_res``) is laid out on that edge. This is
the skew-random-walk discretisation of the gluing condition. Exterior
vertices reflect.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ks_2samp

from .graph.coefficients import EdgeCoefficients, edge_coefficients, gluing_probabilities
from .graph.reeb import build_reeb_graph
from .integrators import replicate_rng, simulate

logger = logging.getLogger(__name__)

__all__ = [
    "GraphLimitModel",
    "GraphDiffusionState",
    "build_graph_limit",
    "y_step",
    "simulate_y",
    "DistanceReport",
    "compare_projected_law",
    "projected_hmm_ensemble",
]

N_FINE = 10


@dataclass
class GraphDiffusionState:
    """Ensemble state ``(x, edge)`` on the graph."""

    x: np.ndarray
    edge: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float)).copy()
        self.edge = np.atleast_1d(np.asarray(self.edge, dtype=np.int64)).copy()
        if self.x.shape != self.edge.shape:
            raise ValueError("x and edge must have the same shape")


@dataclass
class GraphLimitModel:
    """Coefficients and gluing data for every edge and interior vertex."""

    graph: object
    beta: float
    coeffs: dict
    gluing: dict
    zeta_res: float = 1e-3
    _meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        g = self.graph
        n = g.n_edges
        self.lo = np.array([e.lo for e in g.edges])
        self.hi = np.array([e.hi for e in g.edges])
        self.lower_v = np.array([-1 if e.lower_vertex is None else e.lower_vertex for e in g.edges])
        self.upper_v = np.array([-1 if e.upper_vertex is None else e.upper_vertex for e in g.edges])
        self.v_energy = np.array([v.energy for v in g.vertices])
        self.v_interior = np.array([not v.exterior for v in g.vertices])
        # per-vertex branching tables: exit edges and cumulative probabilities
        self.branch_edges = {}
        self.branch_cdf = {}
        self.branch_up = {}
        for j, w in self.gluing.items():
            self.branch_edges[j] = np.array(w.edges)
            self.branch_cdf[j] = np.cumsum(w.p)
            self.branch_cdf[j][-1] = 1.0
            self.branch_up[j] = np.array([i in w.upper for i in w.edges])
        for i in range(n):
            if i not in self.coeffs:
                raise ValueError(f"missing coefficients for edge {i}")
        for j in np.nonzero(self.v_interior)[0]:
            if int(j) not in self.gluing:
                raise ValueError(f"missing gluing weights for vertex {j}")

    def coefficients(self, x, edge):
        drift = np.empty_like(x)
        diff = np.empty_like(x)
        for i in np.unique(edge):
            sel = edge == i
            d, a = self.coeffs[int(i)](x[sel], warn=False)
            drift[sel], diff[sel] = d, a
        return drift, np.maximum(diff, 0.0)


def build_graph_limit(potential, beta, graph=None, n_energies=41, drift=None, zeta_res=1e-3,
                      energy_max=None, n_jobs=1):
    """Reeb graph, edge coefficient tables and gluing weights for ``potential``."""
    graph = graph or build_reeb_graph(potential, zeta_res=zeta_res)
    coeffs = {
        e.index: edge_coefficients(potential, graph, e.index, beta, n_energies=n_energies,
                                   zeta_res=zeta_res, drift=drift, energy_max=energy_max, n_jobs=n_jobs)
        for e in graph.edges
    }
    gluing = {j: gluing_probabilities(potential, graph, j, beta, drift=drift) for j in graph.saddles()}
    return GraphLimitModel(graph, beta, coeffs, gluing, zeta_res)


def _branch(model, x, edge, vertex, overshoot, u):
    """Place states that reached interior ``vertex`` on a randomly chosen incident edge."""
    cdf = model.branch_cdf[vertex]
    k = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
    new_edge = model.branch_edges[vertex][k]
    up = model.branch_up[vertex][k]
    d = np.maximum(overshoot, model.zeta_res)
    e_v = model.v_energy[vertex]
    return np.where(up, e_v + d, e_v - d), new_edge


def y_step(state, dt, model, xi, u):
    """One Euler step of the graph diffusion for the whole ensemble (in place).

    ``xi`` are standard normals and ``u`` uniforms on ``[0, 1)``, one per state.
    """
    x, edge = state.x, state.edge
    drift, diff = model.coefficients(x, edge)
    xn = x + drift * dt + np.sqrt(diff * dt) * xi
    zeta = model.zeta_res
    lo, hi = model.lo[edge], model.hi[edge]
    lv, uv = model.lower_v[edge], model.upper_v[edge]

    # bottom end
    hit_lo = xn < lo + zeta
    if hit_lo.any():
        interior = hit_lo & (lv >= 0) & model.v_interior[np.maximum(lv, 0)]
        exterior = hit_lo & ~interior
        xn = np.where(exterior, 2.0 * (lo + zeta) - xn, xn)
        for j in np.unique(lv[interior]):
            sel = interior & (lv == j)
            xn[sel], edge[sel] = _branch(model, xn[sel], edge[sel], int(j), lo[sel] - xn[sel], u[sel])
    # top end (edges reaching infinite energy have no top vertex)
    hit_hi = (uv >= 0) & (xn > hi - zeta)
    if hit_hi.any():
        interior = hit_hi & model.v_interior[np.maximum(uv, 0)]
        exterior = hit_hi & ~interior
        xn = np.where(exterior, 2.0 * (hi - zeta) - xn, xn)
        for j in np.unique(uv[interior]):
            sel = interior & (uv == j)
            xn[sel], edge[sel] = _branch(model, xn[sel], edge[sel], int(j), xn[sel] - hi[sel], u[sel])
    state.x[:] = xn
    state.edge[:] = edge
    return state


def _near_vertex(model, state, band):
    x, edge = state.x, state.edge
    lo, hi = model.lo[edge], model.hi[edge]
    near_lo = (model.lower_v[edge] >= 0) & (x - lo < band[edge])
    near_hi = (model.upper_v[edge] >= 0) & (hi - x < band[edge])
    return near_lo | near_hi


def simulate_y(model, x0, edge0, T, n_samples=None, seed=0, dt_edge=1e-3, dt_vertex=1e-4,
               record_every=None, replicate_ids=None):
    """Simulate ``n_samples`` independent copies of the graph diffusion up to time ``T``.

    Steps are ``dt_edge`` away from vertices and ``dt_vertex`` (in
    ``dt_edge / dt_vertex`` substeps) within a band of a few step
    standard deviations around them. Each copy draws from its own random
    stream, so results do not depend on how copies are batched.

    Returns the final :class:`GraphDiffusionState` and, if ``record_every``
    is given, a list of ``(t, x, edge)`` snapshots every ``record_every``
    coarse steps.
    """
    n_fine = int(round(dt_edge / dt_vertex))
    if n_fine < 1 or not np.isclose(n_fine * dt_vertex, dt_edge):
        raise ValueError("dt_edge must be an integer multiple of dt_vertex")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if n_samples is not None:
        x0 = np.broadcast_to(x0, (n_samples,))
        edge0 = np.broadcast_to(np.atleast_1d(edge0), (n_samples,))
    state = GraphDiffusionState(x0, edge0)
    n = state.x.size
    ids = np.arange(n) if replicate_ids is None else np.asarray(replicate_ids)
    rngs = [replicate_rng(seed, r) for r in ids]
    n_steps = int(np.floor(T / dt_edge + 1e-9))
    amax = np.array([model.coeffs[i].diffusion.max() for i in range(model.graph.n_edges)])
    dmax = np.array([np.abs(model.coeffs[i].drift).max() for i in range(model.graph.n_edges)])
    band = 4.0 * np.sqrt(amax * dt_edge) + dmax * dt_edge + model.zeta_res
    width = 2 * (n_fine + 1)
    block = 256
    snapshots = []
    if record_every:
        snapshots.append((0.0, state.x.copy(), state.edge.copy()))
    k = 0
    buf = np.empty((block, n, width))
    while k < n_steps:
        kb = min(block, n_steps - k)
        for j, rng in enumerate(rngs):
            buf[:kb, j, : n_fine + 1] = rng.standard_normal((kb, n_fine + 1))
            buf[:kb, j, n_fine + 1:] = rng.random((kb, n_fine + 1))
        for b in range(kb):
            noise = buf[b]
            near = _near_vertex(model, state, band)
            far = ~near
            if far.any():
                sub = GraphDiffusionState(state.x[far], state.edge[far])
                y_step(sub, dt_edge, model, noise[far, 0], noise[far, n_fine + 1])
                state.x[far], state.edge[far] = sub.x, sub.edge
            if near.any():
                sub = GraphDiffusionState(state.x[near], state.edge[near])
                for s in range(n_fine):
                    y_step(sub, dt_vertex, model, noise[near, 1 + s], noise[near, n_fine + 2 + s])
                state.x[near], state.edge[near] = sub.x, sub.edge
            k += 1
            if record_every and k % record_every == 0:
                snapshots.append((k * dt_edge, state.x.copy(), state.edge.copy()))
    if record_every:
        return state, snapshots
    return state


@dataclass
class DistanceReport:
    ks: float
    ks_pvalue: float
    tv: float
    n_a: int
    n_b: int
    occupancy_a: dict
    occupancy_b: dict

    def lines(self):
        yield f"KS distance (energy): {self.ks:.6f} (p = {self.ks_pvalue:.3g})"
        yield f"TV distance (edge occupancy): {self.tv:.6f}"
        yield f"samples: {self.n_a} vs {self.n_b}"
        for e in sorted(set(self.occupancy_a) | set(self.occupancy_b)):
            yield f"  edge {e}: {self.occupancy_a.get(e, 0.0):.4f} vs {self.occupancy_b.get(e, 0.0):.4f}"


def _occupancy(edge):
    values, counts = np.unique(edge, return_counts=True)
    return {int(v): c / edge.size for v, c in zip(values, counts)}


def compare_projected_law(x_a, edge_a, x_b, edge_b):
    """KS distance between energy samples and TV distance between edge-occupancy histograms."""
    x_a, x_b = np.asarray(x_a, dtype=float), np.asarray(x_b, dtype=float)
    edge_a, edge_b = np.asarray(edge_a), np.asarray(edge_b)
    fa, fb = np.isfinite(x_a), np.isfinite(x_b)
    res = ks_2samp(x_a[fa], x_b[fb])
    oa, ob = _occupancy(edge_a[fa]), _occupancy(edge_b[fb])
    keys = set(oa) | set(ob)
    tv = 0.5 * sum(abs(oa.get(k, 0.0) - ob.get(k, 0.0)) for k in keys)
    return DistanceReport(float(res.statistic), float(res.pvalue), float(tv), int(fa.sum()), int(fb.sum()), oa, ob)


def projected_hmm_ensemble(potential, drift, params, z0, t, n_samples, graph, scheme="hmm",
                           replicate_ids=None):
    """Run ``n_samples`` HMM trajectories from ``z0`` to time ``t`` and project them onto ``graph``."""
    z = np.broadcast_to(np.asarray(z0, dtype=float), (n_samples, potential.dimension)).copy()
    res = simulate(z, scheme, params, potential, drift, t, replicate_ids=replicate_ids)
    x, edge = graph.project(res.z[~res.diverged], zeta_res=0.0)
    return x, edge, res
