"""Analytic potentials and the irreversible drifts built on them.

All evaluators are vectorised over leading axes: a state array of shape
``(..., d)`` maps to energies of shape ``(...)``, gradients of shape
``(..., d)``, Laplacians of shape ``(...)`` and Hessians of shape
``(..., d, d)``.
"""

from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Potential",
    "IrreversibleDrift",
    "RegularizerSigma",
    "double_well",
    "tilted_double_well",
    "rbs3",
    "quadratic_bowl",
    "j_drift",
    "tangential_sigma",
    "get_potential",
    "POTENTIALS",
]

ROTATION_J = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class Potential:
    """Scalar field ``U`` with analytic first and second derivatives.

    Parameters
    ----------
    name : str
        Registry id, e.g. ``"double_well"``.
    dimension : int
        State-space dimension ``d``.
    energy, gradient, laplacian : callable
        Vectorised evaluators of ``U``, ``grad U`` and ``tr D^2 U``.
    hessian : callable, optional
        Full Hessian, needed for critical-point classification.
    critical_points : tuple, optional
        Analytically known critical points, used only for diagnostics.
    """

    name: str
    dimension: int
    energy: Callable
    gradient: Callable
    laplacian: Callable
    hessian: Optional[Callable] = None
    critical_points: tuple = field(default=(), compare=False)

    def __call__(self, z):
        return self.energy(np.asarray(z, dtype=float))

    def grad(self, z):
        return self.gradient(np.asarray(z, dtype=float))

    def lap(self, z):
        return self.laplacian(np.asarray(z, dtype=float))

    def hess(self, z):
        if self.hessian is None:
            raise NotImplementedError(f"potential {self.name!r} has no Hessian evaluator")
        return self.hessian(np.asarray(z, dtype=float))

    def generator_energy_drift(self, z, beta):
        """``L_0 U = -|grad U|^2 + beta * tr D^2 U`` at ``z``."""
        g = self.grad(z)
        return -np.sum(g * g, axis=-1) + beta * self.lap(z)


def _stack(*cols):
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def _hess2(hxx, hxy, hyy):
    hxx, hxy, hyy = np.broadcast_arrays(hxx, hxy, hyy)
    row0 = np.stack([hxx, hxy], axis=-1)
    row1 = np.stack([hxy, hyy], axis=-1)
    return np.stack([row0, row1], axis=-2)


# double well with optional linear tilt: U = (x^2-1)^2/4 - tilt*x + y^2

def _dw_energy(z, tilt=0.0):
    x, y = z[..., 0], z[..., 1]
    return 0.25 * (x * x - 1.0) ** 2 - tilt * x + y * y


def _dw_gradient(z, tilt=0.0):
    x, y = z[..., 0], z[..., 1]
    return _stack(x * (x * x - 1.0) - tilt, 2.0 * y)


def _dw_laplacian(z, tilt=0.0):
    x = z[..., 0]
    return 3.0 * x * x + 1.0


def _dw_hessian(z, tilt=0.0):
    x = z[..., 0]
    return _hess2(3.0 * x * x - 1.0, 0.0 * x, 2.0 + 0.0 * x)


def double_well():
    """Symmetric double well ``U = (x^2-1)^2/4 + y^2``.

    Minima at ``(+-1, 0)`` with ``U = 0``, saddle at the origin with
    ``U = 1/4``.
    """
    return Potential(
        name="double_well",
        dimension=2,
        energy=_dw_energy,
        gradient=_dw_gradient,
        laplacian=_dw_laplacian,
        hessian=_dw_hessian,
        critical_points=((-1.0, 0.0), (1.0, 0.0), (0.0, 0.0)),
    )


def tilted_double_well(tilt=0.125):
    """Double well tilted by ``-tilt * x`` (default ``1/8``).

    The critical x-coordinates are the real roots of ``x^3 - x - tilt``.
    """
    roots = np.sort(np.roots([1.0, 0.0, -1.0, -tilt]).real)
    return Potential(
        name="tilted_double_well",
        dimension=2,
        energy=partial(_dw_energy, tilt=tilt),
        gradient=partial(_dw_gradient, tilt=tilt),
        laplacian=partial(_dw_laplacian, tilt=tilt),
        hessian=partial(_dw_hessian, tilt=tilt),
        critical_points=tuple((float(r), 0.0) for r in roots),
    )


# RBS3: U = [(x^2-1)^2 ((y^2-2)^2+1) + 2y^2 - y/8]/4 + exp(-8x^2-4y^2)

def _rbs3_parts(z):
    x, y = z[..., 0], z[..., 1]
    a = (x * x - 1.0) ** 2
    b = (y * y - 2.0) ** 2 + 1.0
    e = np.exp(-8.0 * x * x - 4.0 * y * y)
    return x, y, a, b, e


def _rbs3_energy(z):
    x, y, a, b, e = _rbs3_parts(z)
    return 0.25 * (a * b + 2.0 * y * y - y / 8.0) + e


def _rbs3_gradient(z):
    x, y, a, b, e = _rbs3_parts(z)
    gx = x * (x * x - 1.0) * b - 16.0 * x * e
    gy = a * y * (y * y - 2.0) + y - 1.0 / 32.0 - 8.0 * y * e
    return _stack(gx, gy)


def _rbs3_hessian(z):
    x, y, a, b, e = _rbs3_parts(z)
    hxx = (3.0 * x * x - 1.0) * b + (256.0 * x * x - 16.0) * e
    hyy = a * (3.0 * y * y - 2.0) + 1.0 + (64.0 * y * y - 8.0) * e
    hxy = 4.0 * x * (x * x - 1.0) * y * (y * y - 2.0) + 128.0 * x * y * e
    return _hess2(hxx, hxy, hyy)


def _rbs3_laplacian(z):
    x, y, a, b, e = _rbs3_parts(z)
    return (3.0 * x * x - 1.0) * b + a * (3.0 * y * y - 2.0) + 1.0 + (256.0 * x * x + 64.0 * y * y - 24.0) * e


def rbs3():
    """Four-term potential with two wells, two saddles and a central bump."""
    return Potential(
        name="rbs3",
        dimension=2,
        energy=_rbs3_energy,
        gradient=_rbs3_gradient,
        laplacian=_rbs3_laplacian,
        hessian=_rbs3_hessian,
    )


def _bowl_energy(z):
    return 0.5 * np.sum(z * z, axis=-1)


def _bowl_gradient(z):
    return np.array(z, dtype=float, copy=True)


def _bowl_laplacian(z, dim=2):
    return np.full(z.shape[:-1], float(dim))


def _bowl_hessian(z, dim=2):
    return np.broadcast_to(np.eye(dim), z.shape[:-1] + (dim, dim)).copy()


def quadratic_bowl(dim=2):
    """Isotropic quadratic ``U = |z|^2 / 2`` in ``dim`` dimensions."""
    return Potential(
        name="quadratic_bowl",
        dimension=dim,
        energy=_bowl_energy,
        gradient=_bowl_gradient,
        laplacian=partial(_bowl_laplacian, dim=dim),
        hessian=partial(_bowl_hessian, dim=dim),
        critical_points=(tuple([0.0] * dim),),
    )


POTENTIALS = {
    "double_well": double_well,
    "tilted_double_well": tilted_double_well,
    "rbs3": rbs3,
    "quadratic_bowl": quadratic_bowl,
}


def get_potential(name):
    """Look up a built-in potential by its string id."""
    try:
        factory = POTENTIALS[name]
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; choose from {sorted(POTENTIALS)}") from None
    return factory()


# --------------------------------------------------------------------------
# irreversible drifts

def _rotated_gradient(z, gradient, matrix):
    return gradient(z) @ matrix.T


@dataclass(frozen=True)
class IrreversibleDrift:
    """Divergence-free vector field ``C`` orthogonal to ``grad U``.

    ``kind`` is ``"J"`` for ``C = J grad U`` with antisymmetric ``J`` and
    ``"custom"`` for a user-supplied evaluator (orthogonality and zero
    divergence are then the caller's responsibility).
    """

    field: Callable
    kind: str = "custom"
    matrix: Optional[np.ndarray] = None

    def __call__(self, z):
        return self.field(np.asarray(z, dtype=float))

    def corrected(self, z, sigma=None):
        """``C~ = C + (kappa/2) div(sigma sigma^T)``; equals ``C`` without a regulariser."""
        c = self(z)
        if sigma is None or sigma.kappa == 0.0:
            return c
        return c + 0.5 * sigma.kappa * sigma.divergence(z)


def j_drift(potential, J=None):
    """Irreversible drift ``C(z) = J grad U(z)``.

    With the default rotation ``J = [[0, 1], [-1, 0]]`` (2D only),
    ``C = (dU/dy, -dU/dx)`` and ``|C| = |grad U|`` everywhere.
    """
    d = potential.dimension
    if J is None:
        if d != 2:
            raise ValueError("the default rotation J needs a 2D potential; pass J explicitly")
        J = ROTATION_J
    J = np.asarray(J, dtype=float)
    if J.shape != (d, d):
        raise ValueError(f"J must have shape {(d, d)}, got {J.shape}")
    if d % 2:
        raise ValueError("an antisymmetric J-drift needs an even dimension")
    if not np.allclose(J, -J.T, atol=0.0):
        raise ValueError("J must be antisymmetric")
    return IrreversibleDrift(
        field=partial(_rotated_gradient, gradient=potential.gradient, matrix=J),
        kind="J",
        matrix=J,
    )


# --------------------------------------------------------------------------
# regularising noise

@dataclass(frozen=True)
class RegularizerSigma:
    """Noise matrix ``sigma(z)`` for the fast dynamics, scaled by ``kappa``.

    ``divergence(z)`` returns the vector ``sum_j d/dz_j [sigma sigma^T]_{j i}``
    that enters the drift correction.
    """

    matrix: Callable
    divergence: Callable
    kappa: float = 0.0

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")

    def __call__(self, z):
        return self.matrix(np.asarray(z, dtype=float))

    def diffusion(self, z):
        s = self(z)
        return s @ np.swapaxes(s, -1, -2)

    def check(self, potential, z, atol=1e-10):
        """Verify ``sigma sigma^T grad U = 0`` and symmetry at the states ``z``."""
        a = self.diffusion(z)
        g = potential.grad(z)
        leak = np.einsum("...ij,...j->...i", a, g)
        scale = 1.0 + np.linalg.norm(a, axis=(-2, -1)) * np.linalg.norm(g, axis=-1)
        ok_orth = np.all(np.linalg.norm(leak, axis=-1) <= atol * scale)
        ok_sym = np.allclose(a, np.swapaxes(a, -1, -2), atol=atol)
        eig = np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, -1, -2)))
        ok_psd = np.all(eig >= -atol * scale[..., None])
        return bool(ok_orth and ok_sym and ok_psd)

    def kappa_bound(self, potential, critical_points, K):
        """Upper bound ``(K max lambda_{i,k})^{-1}`` on kappa (only meaningful for kappa > 0)."""
        lam = max(np.max(np.abs(np.linalg.eigvalsh(potential.hess(np.asarray(c))))) for c in critical_points)
        return 1.0 / (K * lam)


def _tangential_matrix(z, gradient):
    g = gradient(z)
    norm = np.linalg.norm(g, axis=-1)[..., None, None]
    d = g.shape[-1]
    outer = g[..., :, None] * g[..., None, :]
    eye = np.eye(d)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = norm * eye - np.where(norm > 0, outer / norm, 0.0)
    return s


def _tangential_divergence(z, gradient, laplacian, hessian):
    # div(|g|^2 I - g g^T)_i = (H g)_i - (tr H) g_i
    g = gradient(z)
    hg = np.einsum("...ij,...j->...i", hessian(z), g)
    return hg - laplacian(z)[..., None] * g


def tangential_sigma(potential, kappa):
    """``sigma = |grad U| (I - n n^T)`` with ``n = grad U / |grad U|``.

    Then ``sigma sigma^T = |grad U|^2 I - grad U grad U^T`` is smooth,
    annihilates ``grad U`` and degenerates quadratically at critical points.
    """
    if potential.hessian is None:
        raise ValueError("tangential_sigma needs a potential with a Hessian")
    return RegularizerSigma(
        matrix=partial(_tangential_matrix, gradient=potential.gradient),
        divergence=partial(
            _tangential_divergence,
            gradient=potential.gradient,
            laplacian=potential.laplacian,
            hessian=potential.hessian,
        ),
        kappa=float(kappa),
    )
