"""One-step maps for the stiff irreversible Langevin SDE.

The building block is the Euler-Maruyama map ``phi_step`` with stiffness
factor ``alpha`` (0 or 1/eps). The multiscale scheme composes one stiff
micro step of length ``tau`` with one drift-only step of length
``delta - tau``; the plain scheme ``em_step`` takes the full drift with
step ``delta``.

Random numbers: every trajectory owns an independent stream keyed by
``(seed, replicate id)``. Per macro step the normals are consumed in a fixed
order (micro noise, optional regulariser noise, then macro noise), so a
trajectory is reproducible no matter how replicates are batched.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "IntegratorParams",
    "StepOutcome",
    "SimulationResult",
    "phi_step",
    "hmm_macro_step",
    "em_step",
    "simulate",
    "replicate_rng",
    "noise_width",
]

SCHEMES = ("em", "hmm")


@dataclass(frozen=True)
class IntegratorParams:
    """Step sizes and physical constants of a run.

    ``eps`` is the stiffness (drift ``C/eps``), ``tau`` the micro step,
    ``delta`` the macro step, ``beta`` the noise level (noise amplitude
    ``sqrt(2 beta)``, Gibbs density ``exp(-U/beta)``), ``kappa`` the
    regulariser strength.
    """

    eps: float
    tau: float
    delta: float
    beta: float
    kappa: float = 0.0
    blowup_norm: float = 1e6
    seed: int = 0
    n_micro: int = 1

    def __post_init__(self):
        for name in ("eps", "tau", "delta", "beta", "blowup_norm"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if not (np.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError(f"kappa must be nonnegative, got {self.kappa!r}")
        if int(self.n_micro) != self.n_micro or self.n_micro < 1:
            raise ValueError("n_micro must be a positive integer")
        if self.n_micro * self.tau > self.delta * (1 + 1e-12):
            raise ValueError("n_micro * tau must not exceed delta")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def alpha(self):
        return 1.0 / self.eps

    def regime_warnings(self):
        """Messages for violations of ``tau < delta < tau/eps``."""
        out = []
        if not self.tau < self.delta:
            out.append(f"tau={self.tau:g} is not smaller than delta={self.delta:g}")
        if not self.delta < self.tau / self.eps:
            out.append(f"delta={self.delta:g} is not smaller than tau/eps={self.tau / self.eps:g}")
        return out

    def check_regime(self):
        for msg in self.regime_warnings():
            warnings.warn(msg, RuntimeWarning, stacklevel=2)

    def convergence_ratios(self):
        """The three ratios that must vanish for convergence to the graph limit."""
        r = self.tau / self.eps
        return {
            "delta*eps/tau": self.delta * self.eps / self.tau,
            "tau/eps": r,
            "(tau/eps)^1.5/delta": r**1.5 / self.delta,
        }


@dataclass
class StepOutcome:
    z: np.ndarray
    diverged: object

    @property
    def status(self):
        if np.ndim(self.diverged) == 0:
            return "diverged" if self.diverged else "ok"
        return np.where(self.diverged, "diverged", "ok")


def _diverged(z, blowup_norm):
    norm = np.sqrt(np.sum(z * z, axis=-1))
    return ~(norm <= blowup_norm)


def replicate_rng(seed, replicate):
    """Independent generator for replicate ``replicate`` of a run seeded by ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.PCG64(ss))


def noise_width(scheme, params, dim, sigma=None):
    """Number of standard normals one macro step consumes per trajectory."""
    if scheme == "em":
        return dim
    if scheme != "hmm":
        raise ValueError(f"unknown scheme {scheme!r}")
    per_micro = dim * (2 if _uses_sigma(sigma, params.kappa) else 1)
    return params.n_micro * per_micro + dim


def _uses_sigma(sigma, kappa):
    return sigma is not None and kappa > 0


def _check_kappa(params, sigma):
    if sigma is not None and sigma.kappa != params.kappa:
        raise ValueError(f"regulariser kappa={sigma.kappa:g} disagrees with params.kappa={params.kappa:g}")


def _drift_and_gradient(z, potential, drift, sigma):
    g = potential.gradient(z)
    if drift is None:
        return g, None
    if drift.kind == "J" and drift.matrix is not None:
        c = g @ drift.matrix.T
        if sigma is not None and sigma.kappa > 0:
            c = c + 0.5 * sigma.kappa * sigma.divergence(z)
    else:
        c = drift.corrected(z, sigma)
    return g, c


def phi_step(z, h, alpha, potential, drift, beta, rng=None, *, sigma=None, xi=None,
             xi_sigma=None, blowup_norm=1e6):
    """Euler-Maruyama map of length ``h`` with stiffness factor ``alpha``.

    ``z' = z - h grad U + alpha h C~ + sqrt(2 beta h) xi
    + sqrt(kappa alpha h) sigma(z) xi'``; the last term only when a
    regulariser with ``kappa > 0`` is given and ``alpha > 0``.

    ``xi`` and ``xi_sigma`` may be supplied to make the step deterministic;
    otherwise they are drawn from ``rng``.
    """
    z = np.asarray(z, dtype=float)
    if h < 0:
        raise ValueError("step length must be nonnegative")
    if xi is None:
        xi = rng.standard_normal(z.shape)
    use_sigma = alpha > 0 and sigma is not None and sigma.kappa > 0
    if use_sigma and xi_sigma is None:
        xi_sigma = rng.standard_normal(z.shape)
    if alpha > 0:
        g, c = _drift_and_gradient(z, potential, drift, sigma)
        out = z + h * (alpha * c - g)
    else:
        out = z - h * potential.gradient(z)
    out = out + np.sqrt(2.0 * beta * h) * xi
    if use_sigma:
        s = sigma(z)
        out = out + np.sqrt(sigma.kappa * alpha * h) * np.einsum("...ij,...j->...i", s, xi_sigma)
    return StepOutcome(out, _diverged(out, blowup_norm))


def _split(noise, dim, n_micro, with_sigma):
    """Split one macro step's normals into (micro, micro_sigma) pairs and the macro part."""
    micro = []
    pos = 0
    for _ in range(n_micro):
        xi = noise[..., pos:pos + dim]
        pos += dim
        xs = None
        if with_sigma:
            xs = noise[..., pos:pos + dim]
            pos += dim
        micro.append((xi, xs))
    return micro, noise[..., pos:pos + dim]


def hmm_macro_step(z, params, potential, drift, rng=None, sigma=None, noise=None):
    """One macro step of the multiscale scheme.

    Applies ``n_micro`` stiff steps of length ``tau`` (``alpha = 1/eps``)
    followed by one drift-only step of length ``delta - n_micro * tau``.
    """
    z = np.asarray(z, dtype=float)
    dim = z.shape[-1]
    _check_kappa(params, sigma)
    with_sigma = _uses_sigma(sigma, params.kappa)
    if noise is None:
        noise = rng.standard_normal(z.shape[:-1] + (noise_width("hmm", params, dim, sigma),))
    micro, macro = _split(noise, dim, params.n_micro, with_sigma)
    diverged = np.zeros(z.shape[:-1], dtype=bool)
    for xi, xs in micro:
        step = phi_step(z, params.tau, params.alpha, potential, drift, params.beta, sigma=sigma,
                        xi=xi, xi_sigma=xs, blowup_norm=params.blowup_norm)
        z, diverged = step.z, diverged | step.diverged
    rest = max(params.delta - params.n_micro * params.tau, 0.0)
    step = phi_step(z, rest, 0.0, potential, drift, params.beta, xi=macro,
                    blowup_norm=params.blowup_norm)
    return StepOutcome(step.z, diverged | step.diverged)


def em_step(z, params, potential, drift, rng=None, noise=None):
    """Direct Euler-Maruyama step of the stiff SDE with step ``delta``."""
    z = np.asarray(z, dtype=float)
    if noise is None:
        noise = rng.standard_normal(z.shape)
    g = potential.gradient(z)
    if drift is None:
        b = -g
    elif drift.kind == "J" and drift.matrix is not None:
        b = (g @ drift.matrix.T) / params.eps - g
    else:
        b = drift(z) / params.eps - g
    out = z + params.delta * b + np.sqrt(2.0 * params.beta * params.delta) * noise
    return StepOutcome(out, _diverged(out, params.blowup_norm))


@dataclass
class SimulationResult:
    """Outcome of :func:`simulate`.

    ``diverged_step`` holds, per trajectory, the index of the macro step at
    which it blew up (``-1`` if it never did). Diverged trajectories are
    frozen as NaN rows in ``z``.
    """

    z: np.ndarray
    t: float
    n_steps: int
    diverged_step: np.ndarray

    @property
    def diverged(self):
        return self.diverged_step >= 0

    @property
    def status(self):
        if self.diverged_step.ndim == 0:
            return "diverged" if self.diverged_step >= 0 else "ok"
        return np.where(self.diverged, "diverged", "ok")

    def divergence_time(self, delta):
        return np.where(self.diverged, self.diverged_step * delta, np.nan)


def n_macro_steps(T, delta):
    return int(np.floor(T / delta + 1e-9))


def simulate(z0, scheme, params, potential, drift, T, observer: Optional[Callable] = None,
             sigma=None, replicate_ids=None, block=1024):
    """Integrate one trajectory (``z0`` of shape ``(d,)``) or a batch (``(n, d)``).

    ``observer(t_n, z_n)`` is called with the initial state and after every
    macro step, at ``t_n = n * delta``. Trajectory ``k`` of a batch uses the
    random stream of replicate ``replicate_ids[k]`` (default ``k``).
    Integration stops early once every trajectory has diverged.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    if not T > 0:
        raise ValueError("T must be positive")
    z = np.array(z0, dtype=float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    n, dim = z.shape
    if dim != potential.dimension:
        raise ValueError(f"state dimension {dim} does not match potential dimension {potential.dimension}")
    ids = np.arange(n) if replicate_ids is None else np.asarray(replicate_ids)
    if ids.shape != (n,):
        raise ValueError("replicate_ids must have one entry per trajectory")
    _check_kappa(params, sigma)
    rngs = [replicate_rng(params.seed, r) for r in ids]
    width = noise_width(scheme, params, dim, sigma)
    n_steps = n_macro_steps(T, params.delta)
    diverged_step = np.full(n, -1, dtype=np.int64)
    alive = np.ones(n, dtype=bool)

    def emit(t):
        if observer is not None:
            observer(t, z[0] if single else z)

    emit(0.0)
    noise = np.empty((block, n, width))
    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while k < n_steps:
            kb = min(block, n_steps - k)
            for j, rng in enumerate(rngs):
                noise[:kb, j, :] = rng.standard_normal((kb, width))
            for b in range(kb):
                if scheme == "hmm":
                    out = hmm_macro_step(z, params, potential, drift, sigma=sigma, noise=noise[b])
                else:
                    out = em_step(z, params, potential, drift, noise=noise[b])
                z = out.z
                k += 1
                bad = out.diverged & alive
                if bad.any():
                    diverged_step[bad] = k
                    alive &= ~bad
                    z[bad] = np.nan
                    logger.debug("%d trajectories diverged at step %d", int(bad.sum()), k)
                emit(k * params.delta)
                if not alive.any():
                    break
            if not alive.any():
                break
    result_z = z[0] if single else z
    ds = diverged_step[0] if single else diverged_step
    return SimulationResult(z=result_z, t=k * params.delta, n_steps=k, diverged_step=np.asarray(ds))
