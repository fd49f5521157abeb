"""Critical points of a 2D potential: Newton refinement from grid seeds."""

from dataclasses import dataclass

import numpy as np

__all__ = ["CriticalPoint", "ConditionViolation", "find_critical_points"]


class ConditionViolation(ValueError):
    """The potential breaks a structural assumption (degenerate critical point, shared level component)."""


@dataclass(frozen=True)
class CriticalPoint:
    location: tuple
    energy: float
    kind: str  # "minimum", "saddle" or "maximum"
    eigenvalues: tuple

    @property
    def z(self):
        return np.asarray(self.location, dtype=float)


def _classify(eig):
    if np.all(eig > 0):
        return "minimum"
    if np.all(eig < 0):
        return "maximum"
    return "saddle"


def _seed_cells(potential, box, n):
    x0, x1, y0, y1 = box
    xs, ys = np.linspace(x0, x1, n), np.linspace(y0, y1, n)
    Z = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
    g = potential.gradient(Z)
    seeds = []
    for k in range(2):
        gk = g[..., k]
        corners = np.stack([gk[:-1, :-1], gk[1:, :-1], gk[:-1, 1:], gk[1:, 1:]])
        change = (corners.min(axis=0) <= 0) & (corners.max(axis=0) >= 0)
        seeds.append(change)
    i, j = np.nonzero(seeds[0] & seeds[1])
    return 0.5 * (Z[i, j] + Z[i + 1, j + 1])


def find_critical_points(potential, box=(-3.0, 3.0, -3.0, 3.0), n_seeds=201, tol=1e-12,
                         dedupe=1e-6, det_tol=1e-8, max_iter=60):
    """Locate, deduplicate and classify the critical points of ``potential`` inside ``box``.

    Seeds are grid cells where both gradient components change sign; each is
    refined by Newton's method with the analytic Hessian. Results are sorted
    by energy. A Hessian with ``|det| < det_tol`` raises
    :class:`ConditionViolation`.
    """
    if potential.dimension != 2:
        raise ValueError("critical-point search is implemented for d = 2")
    if potential.hessian is None:
        raise ValueError("a Hessian evaluator is required")
    x0, x1, y0, y1 = box
    found = []
    for z in _seed_cells(potential, box, n_seeds):
        for _ in range(max_iter):
            g = potential.grad(z)
            if np.linalg.norm(g) <= tol:
                break
            try:
                step = np.linalg.solve(potential.hess(z), g)
            except np.linalg.LinAlgError:
                break
            z = z - step
            if not np.all(np.isfinite(z)):
                break
        if not np.all(np.isfinite(z)) or np.linalg.norm(potential.grad(z)) > 1e3 * tol:
            continue
        if not (x0 <= z[0] <= x1 and y0 <= z[1] <= y1):
            continue
        if any(np.linalg.norm(z - f) < dedupe for f in found):
            continue
        found.append(z)
    out = []
    for z in found:
        h = potential.hess(z)
        if abs(np.linalg.det(h)) < det_tol:
            raise ConditionViolation(f"degenerate critical point at {tuple(np.round(z, 8))}: det D^2U = {np.linalg.det(h):.3e}")
        eig = np.linalg.eigvalsh(0.5 * (h + h.T))
        out.append(CriticalPoint(tuple(float(v) for v in z), float(potential(z)), _classify(eig),
                                 tuple(float(v) for v in eig)))
    out.sort(key=lambda c: (c.energy, c.location))
    return out
