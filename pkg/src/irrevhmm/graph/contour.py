"""Closed level curves of a 2D potential and line integrals along them.

Curves are located with marching squares (``skimage.measure.find_contours``)
on a cached lattice over the analysis box, pulled onto the exact level set
by Newton steps along the gradient, and re-parametrised by a periodic cubic
spline. Integrals ``oint g dl`` use Gauss-Legendre nodes on the spline,
with one Richardson step between the full and the half sample count.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from skimage.measure import find_contours

logger = logging.getLogger(__name__)

__all__ = [
    "ContourError",
    "NearCriticalWarning",
    "LevelCurve",
    "LevelCurveExtractor",
    "contour_integral",
    "contour_integrals",
]

DEFAULT_BOX = (-3.0, 3.0, -3.0, 3.0)
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(4)


class ContourError(RuntimeError):
    """The requested level curve could not be extracted as a closed loop."""


class NearCriticalWarning(RuntimeWarning):
    """The level curve passes close to a critical point."""


def _project(potential, pts, level, n_iter=3):
    for _ in range(n_iter):
        g = potential.gradient(pts)
        gg = np.sum(g * g, axis=-1, keepdims=True)
        pts = pts - (potential.energy(pts) - level)[..., None] * g / np.maximum(gg, 1e-300)
    return pts


def _periodic_spline(pts, t=None):
    closed = np.vstack([pts, pts[:1]])
    if t is None:
        seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        t = np.r_[0.0, np.cumsum(seg)]
        t = t / t[-1]
    return CubicSpline(t, closed, bc_type="periodic", axis=0)


@dataclass
class LevelCurve:
    """A closed level curve sampled at ``points`` (uniform spline parameter)."""

    level: float
    points: np.ndarray
    potential: object

    def spline(self, stride=1):
        pts = self.points[::stride]
        return _periodic_spline(pts, np.linspace(0.0, 1.0, len(pts) + 1))

    def _integrate(self, fs, stride):
        sp = self.spline(stride)
        n = len(self.points[::stride])
        edges = np.linspace(0.0, 1.0, n + 1)
        half = 0.5 * np.diff(edges)
        t = (0.5 * (edges[:-1] + edges[1:]))[:, None] + half[:, None] * _GAUSS_X[None, :]
        w = (half[:, None] * _GAUSS_W[None, :]).ravel()
        t = t.ravel()
        z = sp(t)
        speed = np.linalg.norm(sp(t, 1), axis=-1)
        return np.array([np.sum(w * speed * np.broadcast_to(f(z), t.shape)) for f in fs])

    def integrals(self, fs):
        """Richardson-combined ``oint f dl`` for each callable in ``fs`` and an error estimate."""
        fine = self._integrate(fs, 1)
        coarse = self._integrate(fs, 2)
        diff = (fine - coarse) / 15.0
        return fine + diff, np.abs(diff)

    @property
    def min_gradient(self):
        return float(np.min(np.linalg.norm(self.potential.gradient(self.points), axis=-1)))

    @property
    def length(self):
        return float(self.integrals([lambda z: 1.0])[0][0])


class LevelCurveExtractor:
    """Marching-squares lattice over an analysis box, evaluated once and reused."""

    def __init__(self, potential, box=DEFAULT_BOX, resolution=2048, n_resample=4096):
        if potential.dimension != 2:
            raise ValueError("level curves are implemented for d = 2")
        self.potential = potential
        self.box = tuple(float(b) for b in box)
        x0, x1, y0, y1 = self.box
        self.resolution = int(resolution)
        self.n_resample = int(n_resample)
        h = max(x1 - x0, y1 - y0) / (self.resolution - 1)
        self.nx = int(round((x1 - x0) / h)) + 1
        self.ny = int(round((y1 - y0) / h)) + 1
        self.hx = (x1 - x0) / (self.nx - 1)
        self.hy = (y1 - y0) / (self.ny - 1)
        self._grid = None

    @property
    def grid(self):
        if self._grid is None:
            x0, x1, y0, y1 = self.box
            xs, ys = np.linspace(x0, x1, self.nx), np.linspace(y0, y1, self.ny)
            Z = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
            self._grid = self.potential.energy(Z)
        return self._grid

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_grid"] = None
        return state

    def to_xy(self, rc, i0=0, j0=0):
        return np.column_stack([self.box[0] + (rc[:, 0] + i0) * self.hx,
                                self.box[2] + (rc[:, 1] + j0) * self.hy])

    def to_index(self, z):
        z = np.asarray(z, dtype=float)
        return ((z[..., 0] - self.box[0]) / self.hx, (z[..., 1] - self.box[2]) / self.hy)

    def _nearest(self, level, seed, window):
        i0, i1, j0, j1 = window
        sub = self.grid[i0:i1 + 1, j0:j1 + 1]
        best = None
        for c in find_contours(sub, level):
            xy = self.to_xy(c, i0, j0)
            d = np.min(np.linalg.norm(xy - seed, axis=1))
            if best is None or d < best[0]:
                best = (d, xy, bool(np.allclose(c[0], c[-1])))
        return best

    def raw_curve(self, level, seed, window=None):
        """Polyline of the closed curve ``{U = level}`` passing nearest ``seed``."""
        seed = np.asarray(seed, dtype=float)
        full = (0, self.nx - 1, 0, self.ny - 1)
        if window is None:
            si, sj = self.to_index(seed)
            r = 16
            window = (int(si) - r, int(si) + r + 1, int(sj) - r, int(sj) + r + 1)
        while True:
            window = (max(window[0], 0), min(window[1], self.nx - 1),
                      max(window[2], 0), min(window[3], self.ny - 1))
            best = self._nearest(level, seed, window)
            if best is not None and best[2]:
                return best[1]
            if window == full:
                if best is None:
                    raise ContourError(f"no level curve at U = {level:.6g} near {tuple(seed)}")
                raise ContourError(f"level curve at U = {level:.6g} near {tuple(seed)} is open in the analysis box")
            wi, wj = window[1] - window[0], window[3] - window[2]
            window = (window[0] - wi, window[1] + wi, window[2] - wj, window[3] + wj)

    def curve(self, level, seed, window=None, n_resample=None):
        """Closed :class:`LevelCurve` through (or nearest to) ``seed``."""
        m = int(n_resample or self.n_resample)
        m += m % 2
        raw = self.raw_curve(level, seed, window)[:-1]
        pts = _project(self.potential, raw, level)
        seg = np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]), axis=0), axis=1)
        keep = seg > 1e-9 * max(seg.sum(), 1e-300)
        pts = pts[keep]
        if len(pts) < 4:
            raise ContourError(f"level curve at U = {level:.6g} is under-resolved ({len(pts)} points)")
        sp = _periodic_spline(pts)
        # two rounds of uniform resampling and projection give a smooth parametrisation
        for _ in range(2):
            q = _project(self.potential, sp(np.linspace(0.0, 1.0, m, endpoint=False)), level)
            sp = _periodic_spline(q)
        q = _project(self.potential, sp(np.linspace(0.0, 1.0, m, endpoint=False)), level)
        return LevelCurve(level, q, self.potential)


def _as_callable(g):
    if callable(g):
        return g
    value = float(g)
    return lambda z: value


def contour_integrals(potential, level, seed, integrands, *, box=DEFAULT_BOX, resolution=2048,
                      n_resample=4096, extractor=None, window=None, grad_floor=1e-4):
    """``oint g dl`` over the closed curve ``{U = level}`` nearest ``seed``, for several ``g``.

    Returns ``(values, error_estimates, curve)``. Emits
    :class:`NearCriticalWarning` when ``min |grad U|`` on the curve is below
    ``grad_floor``.
    """
    ex = extractor or LevelCurveExtractor(potential, box, resolution, n_resample)
    curve = ex.curve(level, seed, window, n_resample)
    if curve.min_gradient < grad_floor:
        warnings.warn(f"level {level:.6g}: min |grad U| = {curve.min_gradient:.2e} on the curve",
                      NearCriticalWarning, stacklevel=2)
    values, err = curve.integrals([_as_callable(g) for g in integrands])
    return values, err, curve


def contour_integral(potential, level, seed, g, **kwargs):
    """``oint g dl`` over the closed level curve ``{U = level}`` through ``seed``.

    ``g`` is a vectorised callable of ``z`` (shape ``(..., 2)``) or a constant.
    """
    values, _, _ = contour_integrals(potential, level, seed, [g], **kwargs)
    return float(values[0])
