"""Level-curve averages on the edges of the Reeb graph and gluing weights at saddles.

For an energy ``x`` on edge ``i`` with level curve ``gamma``::

    T(x)      = oint m / |grad U| dl
    L0U_hat   = (1/T) oint (-|grad U|^2 + beta lap U) m / |grad U| dl
    A_hat     = (1/T) oint 2 beta |grad U| m dl

with ``m = |grad U| / |C|`` (identically 1 for the rotation drift). At a
saddle ``O_j`` the weight of an incident edge is ``b_ji = 2 beta oint |grad U| m dl``
over the separatrix loop bounding that edge; only magnitudes enter, so the
orientation sign of the flux condition is dropped.
"""

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .contour import LevelCurveExtractor

logger = logging.getLogger(__name__)

__all__ = [
    "EdgeCoefficients",
    "GluingWeights",
    "edge_coefficients",
    "gluing_probabilities",
    "chebyshev_energies",
    "level_integrands",
]


class OutOfTableWarning(RuntimeWarning):
    """An energy outside the tabulated range was clamped to the nearest node."""


def chebyshev_energies(a, b, n):
    """Chebyshev-Lobatto nodes on ``[a, b]`` in increasing order (endpoints included)."""
    if n < 2:
        raise ValueError("need at least two energies")
    k = np.arange(n)
    return 0.5 * (a + b) - 0.5 * (b - a) * np.cos(np.pi * k / (n - 1))


def _density(potential, drift):
    if drift is None or (drift.kind == "J" and drift.matrix is not None and drift.matrix.shape == (2, 2)
                         and np.allclose(drift.matrix @ drift.matrix.T, np.eye(2))):
        return lambda z: 1.0

    def m(z):
        return np.linalg.norm(potential.gradient(z), axis=-1) / np.linalg.norm(drift(z), axis=-1)

    return m


def level_integrands(potential, beta, drift=None):
    """Integrands for ``T``, ``T * L0U_hat`` and ``T * A_hat`` (in that order)."""
    m = _density(potential, drift)

    def grad_norm(z):
        return np.linalg.norm(potential.gradient(z), axis=-1)

    def f_t(z):
        return m(z) / grad_norm(z)

    def f_l(z):
        g = grad_norm(z)
        return (-g * g + beta * potential.laplacian(z)) * m(z) / g

    def f_a(z):
        return 2.0 * beta * grad_norm(z) * m(z)

    return [f_t, f_l, f_a]


@dataclass
class EdgeCoefficients:
    """Tabulated ``T``, averaged drift and averaged diffusion along one edge."""

    edge: int
    beta: float
    x: np.ndarray
    T: np.ndarray
    drift: np.ndarray
    diffusion: np.ndarray
    error: np.ndarray = field(default=None, repr=False)

    @property
    def lo(self):
        return float(self.x[0])

    @property
    def hi(self):
        return float(self.x[-1])

    def __call__(self, x, warn=True):
        """Linearly interpolated ``(L0U_hat(x), A_hat(x))``; clamped outside the table."""
        x = np.asarray(x, dtype=float)
        if warn and np.any((x < self.lo) | (x > self.hi)):
            warnings.warn(f"edge {self.edge}: energy outside tabulation [{self.lo:.4g}, {self.hi:.4g}]",
                          OutOfTableWarning, stacklevel=2)
        return np.interp(x, self.x, self.drift), np.interp(x, self.x, self.diffusion)

    def rows(self):
        for x, t, d, a in zip(self.x, self.T, self.drift, self.diffusion):
            yield self.edge, x, t, d, a

    @classmethod
    def constant(cls, edge, lo, hi, drift, diffusion, beta=0.0):
        x = np.array([lo, hi], dtype=float)
        return cls(edge, beta, x, np.ones(2), np.full(2, float(drift)), np.full(2, float(diffusion)))


def _tabulate_chunk(args):
    potential, box, resolution, n_resample, beta, drift, jobs = args
    ex = LevelCurveExtractor(potential, box, resolution, n_resample)
    fs = level_integrands(potential, beta, drift)
    out = []
    for x, seed, window in jobs:
        curve = ex.curve(x, seed, window)
        values, err = curve.integrals(fs)
        out.append((values, err))
    return out


def _default_top(graph, edge):
    if np.isfinite(edge.hi):
        return edge.hi
    return edge.lo + 0.8 * (graph.energy_cap - edge.lo)


def edge_coefficients(potential, graph, edge, beta, n_energies=41, zeta_res=None, drift=None,
                      energy_max=None, resolution=1024, n_resample=2048, n_jobs=1):
    """Tabulate ``T``, ``L0U_hat`` and ``A_hat`` on Chebyshev energies of ``edge``.

    The table covers ``[lo + zeta_res, hi - zeta_res]``; an edge reaching
    infinite energy is cut at ``energy_max`` (default: 80% of the way to
    the lowest energy on the box boundary).
    """
    e = graph.edges[edge] if isinstance(edge, (int, np.integer)) else edge
    zeta = graph.zeta_res if zeta_res is None else zeta_res
    top = energy_max if energy_max is not None and not np.isfinite(e.hi) else _default_top(graph, e)
    a, b = e.lo + zeta, (top - zeta if np.isfinite(e.hi) else top)
    if not b > a:
        raise ValueError(f"edge {e.index} has no interior at resolution {zeta}")
    xs = chebyshev_energies(a, b, n_energies)
    window = graph.edge_window(e.index)
    scale = (resolution - 1) / (graph.extractor.resolution - 1)
    window = tuple(int(w * scale) for w in window)
    jobs = [(x, graph.edge_seed(e.index, x), window) for x in xs]
    n_jobs = max(1, min(int(n_jobs), len(jobs)))
    chunks = [list(c) for c in np.array_split(np.arange(len(jobs)), n_jobs)]
    tasks = [(potential, graph.box, resolution, n_resample, beta, drift, [jobs[i] for i in c]) for c in chunks]
    if n_jobs == 1:
        results = [_tabulate_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_tabulate_chunk, tasks))
    flat = [r for chunk in results for r in chunk]
    vals = np.array([v for v, _ in flat])
    errs = np.array([er for _, er in flat])
    T = vals[:, 0]
    if np.any(T <= 0):
        raise ArithmeticError(f"nonpositive period on edge {e.index}")
    return EdgeCoefficients(e.index, beta, xs, T, vals[:, 1] / T, vals[:, 2] / T, errs)


@dataclass
class GluingWeights:
    """Weights ``b_ji`` and probabilities ``p_ji`` at one interior vertex."""

    vertex: int
    edges: tuple
    b: np.ndarray
    p: np.ndarray
    lower: tuple
    upper: tuple
    etas: np.ndarray = field(default=None, repr=False)
    b_by_eta: np.ndarray = field(default=None, repr=False)

    def probability(self, edge):
        return float(self.p[self.edges.index(edge)])

    def weight(self, edge):
        return float(self.b[self.edges.index(edge)])

    @property
    def descent(self):
        """Branching probabilities among the lower edges only (``b_i / sum_lower b``)."""
        b = np.array([self.weight(i) for i in self.lower])
        return dict(zip(self.lower, b / b.sum()))

    @property
    def ascent(self):
        b = np.array([self.weight(i) for i in self.upper])
        return dict(zip(self.upper, b / b.sum()))

    @property
    def flux_residual(self):
        """``sum_upper b - sum_lower b`` relative to the total; zero for a consistent separatrix."""
        up = sum(self.weight(i) for i in self.upper)
        lo = sum(self.weight(i) for i in self.lower)
        return (up - lo) / (up + lo)


def _extrapolate(etas, values):
    # b(eta) = b0 + c1 eta log(eta) + c2 eta near a nondegenerate saddle
    A = np.column_stack([np.ones_like(etas), etas * np.log(etas), etas])
    return np.linalg.solve(A, values)[0]


def gluing_probabilities(potential, graph, vertex, beta, drift=None, eta=None, n_resample=8192):
    """Gluing weights at the interior vertex ``vertex``.

    Separatrix integrals are evaluated on the curves ``U = U(O_j) -+ eta_k``
    for ``eta_k = 4 eta, 2 eta, eta`` and extrapolated to ``eta = 0``;
    ``eta`` defaults to ``1e-4`` times the spread of the critical energies.
    """
    v = graph.vertices[vertex]
    if v.exterior or v.kind != "saddle":
        raise ValueError(f"vertex {vertex} is not an interior (saddle) vertex")
    if eta is None:
        eta = 1e-4 * max(float(np.ptp(graph.levels)), 1e-2)
    etas = eta * np.array([4.0, 2.0, 1.0])
    ex = graph.extractor
    m = _density(potential, drift)

    def f_b(z):
        return 2.0 * beta * np.linalg.norm(potential.gradient(z), axis=-1) * m(z)

    edges = v.edges_below + v.edges_above
    table = np.zeros((len(edges), len(etas)))
    for a, i in enumerate(edges):
        sign = -1.0 if i in v.edges_below else 1.0
        for k, h in enumerate(etas):
            level = v.energy + sign * h
            curve = ex.curve(level, graph.edge_seed(i, level), n_resample=n_resample)
            table[a, k] = curve.integrals([f_b])[0][0]
    b = np.array([_extrapolate(etas, row) for row in table])
    if np.any(b <= 0):
        raise ArithmeticError(f"nonpositive gluing weight at vertex {vertex}")
    logger.info("vertex %d: b=%s (eta table %s)", vertex, b, table)
    return GluingWeights(vertex, tuple(edges), b, b / b.sum(), v.edges_below, v.edges_above, etas, table)
