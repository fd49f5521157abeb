"""Grid quadrature of Gibbs averages ``<f> = int f e^{-U/beta} / int e^{-U/beta}``.

Composite Simpson on a tensor grid, with the weight shifted by the grid
minimum of ``U`` so that small ``beta`` does not underflow. The grid is
refined by doubling until the relative change drops below ``rtol``.
"""

import logging
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import simpson

from .sampler import get_observable

logger = logging.getLogger(__name__)

__all__ = ["GridSpec", "GibbsResult", "MassContainmentError", "gibbs_average", "gibbs_report"]


class MassContainmentError(ValueError):
    """The Gibbs weight is not negligible on the boundary of the box."""


@dataclass(frozen=True)
class GridSpec:
    x0: float = -3.0
    x1: float = 3.0
    y0: float = -3.0
    y1: float = 3.0
    nx: int = 513
    ny: int = 513

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("box must have positive extent")
        if self.nx < 3 or self.ny < 3:
            raise ValueError("need at least 3 nodes per axis")

    def axes(self):
        return np.linspace(self.x0, self.x1, self.nx), np.linspace(self.y0, self.y1, self.ny)

    def contains(self, point):
        x, y = point[0], point[1]
        return self.x0 < x < self.x1 and self.y0 < y < self.y1

    def refined(self):
        return replace(self, nx=2 * self.nx - 1, ny=2 * self.ny - 1)


@dataclass
class GibbsResult:
    value: float
    previous: float
    rel_change: float
    nx: int
    ny: int
    boundary_ratio: float
    converged: bool


def _resolve(f):
    return get_observable(f) if isinstance(f, str) else f


def _single(potential, beta, f, grid, mass_tol):
    xs, ys = grid.axes()
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Z = np.stack([X, Y], axis=-1)
    u = potential.energy(Z)
    w = np.exp(-(u - u.min()) / beta)
    edge = max(w[0].max(), w[-1].max(), w[:, 0].max(), w[:, -1].max())
    ratio = float(edge / w.max())
    if ratio >= mass_tol:
        raise MassContainmentError(
            f"boundary Gibbs weight ratio {ratio:.3e} exceeds {mass_tol:g}; enlarge the box"
        )
    fz = np.broadcast_to(np.asarray(f(Z), dtype=float), w.shape)
    num = simpson(simpson(fz * w, x=ys, axis=1), x=xs)
    den = simpson(simpson(w, x=ys, axis=1), x=xs)
    return float(num / den), ratio


def _auto_grid(potential, beta, f, mass_tol, grow=1.25, max_tries=12):
    """Default box ``[-3, 3]^2``, enlarged until the boundary weight is negligible."""
    grid = GridSpec()
    for _ in range(max_tries):
        try:
            _single(potential, beta, f, replace(grid, nx=129, ny=129), mass_tol)
            return grid
        except MassContainmentError:
            grid = replace(grid, x0=grid.x0 * grow, x1=grid.x1 * grow, y0=grid.y0 * grow,
                           y1=grid.y1 * grow, nx=int(grid.nx * grow) | 1, ny=int(grid.ny * grow) | 1)
    raise MassContainmentError("could not find a box containing the Gibbs mass")


def gibbs_report(potential, beta, f, grid=None, rtol=1e-6, max_nodes=8193, mass_tol=1e-12):
    """Gibbs average with convergence diagnostics.

    ``f`` is a vectorised callable on ``(..., 2)`` arrays or an observable
    id. Without an explicit ``grid`` the default box is grown until the
    boundary weight ratio is below ``mass_tol``; an explicit grid that
    truncates mass raises :class:`MassContainmentError`.
    """
    if potential.dimension != 2:
        raise ValueError("grid quadrature is implemented for d = 2 only")
    if not beta > 0:
        raise ValueError("beta must be positive")
    f = _resolve(f)
    if grid is None:
        grid = _auto_grid(potential, beta, f, mass_tol)
    for c in potential.critical_points:
        if not grid.contains(c):
            raise MassContainmentError(f"critical point {c} lies outside the box")
    prev, _ = _single(potential, beta, f, grid, mass_tol)
    while True:
        fine = grid.refined()
        if max(fine.nx, fine.ny) > max_nodes:
            warnings.warn("Gibbs quadrature did not reach the requested tolerance", RuntimeWarning,
                          stacklevel=2)
            return GibbsResult(prev, float("nan"), float("nan"), grid.nx, grid.ny, float("nan"), False)
        value, ratio = _single(potential, beta, f, fine, mass_tol)
        rel = abs(value - prev) / max(abs(value), 1e-300)
        logger.debug("gibbs n=%d value=%.12g rel=%.2e", fine.nx, value, rel)
        # an exactly vanishing average (odd f on a symmetric well) is converged in absolute terms
        if rel < rtol or abs(value - prev) < rtol * 1e-6:
            return GibbsResult(value, prev, rel, fine.nx, fine.ny, ratio, True)
        grid, prev = fine, value


def gibbs_average(potential, beta, f, grid=None, **kwargs):
    """Gibbs average of ``f`` under ``exp(-U/beta)`` (a float)."""
    return gibbs_report(potential, beta, f, grid, **kwargs).value
