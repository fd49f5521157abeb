"""Time averages, batch-means variance and replicate ensembles.

A run integrates one trajectory over ``[0, T_total]``, discards samples
before ``T_burn`` and records the empirical mean of an observable at the
macro-step boundaries. Replicates use independent random streams and are
aggregated into the mean/std columns of the comparison tables.

Batch-means normalisation
-------------------------
``batch_means_avar(samples, n_batches, batch_duration)`` returns
``batch_duration * Var(batch means)`` (sample variance, ``ddof=1``).
With ``batch_duration`` equal to the batch length in time units this is
the usual estimator of the asymptotic variance ``T Var(time average)``.
The ensemble default ``avar_normalization="batch"`` uses
``batch_duration = 1``, i.e. the plain variance of the batch means; that
is the normalisation under which the published tables' AVar magnitudes
are reproduced. ``"time"`` selects the time-scaled estimator.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .integrators import IntegratorParams, n_macro_steps, simulate

logger = logging.getLogger(__name__)

__all__ = [
    "OBSERVABLES",
    "get_observable",
    "SamplingConfig",
    "RunStats",
    "EnsembleSummary",
    "time_average",
    "batch_means_avar",
    "replicate_ensemble",
]


def _x_plus_y2(z):
    return z[..., 0] + z[..., 1] ** 2


def _shifted_square(z):
    return (z[..., 0] - 1.0) ** 2 + z[..., 1] ** 2


def _first_coordinate(z):
    return z[..., 0]


def _one(z):
    return np.ones(np.shape(z)[:-1])


OBSERVABLES = {
    "x_plus_y2": _x_plus_y2,
    "shifted_square": _shifted_square,
    "x": _first_coordinate,
    "one": _one,
}


def get_observable(name):
    try:
        return OBSERVABLES[name]
    except KeyError:
        raise ValueError(f"unknown observable {name!r}; choose from {sorted(OBSERVABLES)}") from None


@dataclass(frozen=True)
class SamplingConfig:
    T_total: float = 2000.0
    T_burn: float = 20.0
    n_batches: int = 20
    n_replicates: int = 2000
    observable: str = "x_plus_y2"
    avar_normalization: str = "batch"

    def __post_init__(self):
        if not self.T_total > 0:
            raise ValueError("T_total must be positive")
        if not 0 <= self.T_burn <= self.T_total:
            raise ValueError("need 0 <= T_burn <= T_total")
        if self.n_batches < 2:
            raise ValueError("n_batches must be at least 2")
        if self.n_replicates < 0:
            raise ValueError("n_replicates must be nonnegative")
        if self.avar_normalization not in ("batch", "time"):
            raise ValueError("avar_normalization must be 'batch' or 'time'")
        get_observable(self.observable)

    def layout(self, delta):
        """(first post-burn step, last step, post-burn sample count, batch length)."""
        n_total = n_macro_steps(self.T_total, delta)
        n_burn = int(math.ceil(self.T_burn / delta - 1e-9))
        n_post = max(n_total - n_burn + 1, 0)
        return n_burn, n_total, n_post, n_post // self.n_batches

    def batch_duration(self, delta):
        if self.avar_normalization == "batch":
            return 1.0
        return self.layout(delta)[3] * delta


@dataclass
class RunStats:
    time_average: float
    err: float = float("nan")
    avar: float = float("nan")
    diverged: bool = False
    n_samples: int = 0


def batch_means_avar(samples, n_batches=20, batch_duration=1.0):
    """Batch-means variance estimate of a time series.

    The series is cut into ``n_batches`` consecutive batches of equal length
    (a trailing remainder is dropped) and ``batch_duration`` times the
    sample variance of the batch means is returned.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if n_batches < 2:
        raise ValueError("need at least two batches")
    if x.size < n_batches:
        raise ValueError(f"{x.size} samples cannot fill {n_batches} batches")
    m = x.size // n_batches
    means = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(batch_duration * np.var(means, ddof=1))


def time_average(stream, f, cfg, delta, true_average=None):
    """Post-burn-in average of ``f`` over a stream of ``(t, z)`` pairs.

    The stream is expected to end at ``T_total``; a stream that stops
    earlier or produces a non-finite state marks the run as diverged.
    """
    n_burn, n_total, _, _ = cfg.layout(delta)
    t_burn = n_burn * delta
    values = []
    last_t = -np.inf
    diverged = False
    for t, z in stream:
        last_t = t
        if not np.all(np.isfinite(z)):
            diverged = True
            break
        if t >= t_burn - 1e-9 * delta:
            values.append(float(f(np.asarray(z, dtype=float))))
    if last_t < n_total * delta - 1e-9 * delta:
        diverged = True
    if diverged or not values:
        return RunStats(time_average=float("nan"), diverged=True, n_samples=len(values))
    avg = float(np.mean(values))
    avar = float("nan")
    if len(values) >= cfg.n_batches:
        m = len(values) // cfg.n_batches
        duration = 1.0 if cfg.avar_normalization == "batch" else m * delta
        avar = batch_means_avar(values, cfg.n_batches, duration)
    err = abs(avg - true_average) if true_average is not None else float("nan")
    return RunStats(time_average=avg, err=err, avar=avar, n_samples=len(values))


class _BatchAccumulator:
    """Observer that accumulates per-trajectory batch sums of ``f``."""

    def __init__(self, f, cfg, delta, n):
        self.f = f
        self.delta = delta
        self.n_burn, self.n_total, self.n_post, self.m = cfg.layout(delta)
        self.n_batches = cfg.n_batches
        self.total = np.zeros(n)
        self.batches = np.zeros((n, cfg.n_batches))
        self.step = -1

    def __call__(self, t, z):
        self.step += 1
        j = self.step - self.n_burn
        if j < 0:
            return
        v = self.f(z)
        self.total += v
        b = j // self.m if self.m else self.n_batches
        if b < self.n_batches:
            self.batches[:, b] += v


@dataclass
class EnsembleSummary:
    """Aggregated statistics of independent replicates of one parameter set."""

    scheme: str
    params: IntegratorParams
    n_replicates: int
    mean_err: float
    std_err: float
    mean_avar: float
    std_avar: float
    divergence_fraction: float
    time_averages: np.ndarray = field(repr=False, default=None)
    errs: np.ndarray = field(repr=False, default=None)
    avars: np.ndarray = field(repr=False, default=None)
    diverged: np.ndarray = field(repr=False, default=None)

    def as_row(self):
        return {
            "scheme": self.scheme,
            "eps": self.params.eps,
            "tau": self.params.tau if self.scheme == "hmm" else float("nan"),
            "delta": self.params.delta,
            "mean_err": self.mean_err,
            "std_err": self.std_err,
            "mean_avar": self.mean_avar,
            "std_avar": self.std_avar,
            "divergence_fraction": self.divergence_fraction,
            "n_replicates": self.n_replicates,
        }


def _run_chunk(args):
    scheme, params, cfg, potential, drift, sigma, z0, ids = args
    f = get_observable(cfg.observable)
    acc = _BatchAccumulator(f, cfg, params.delta, len(ids))
    z = np.array(z0, dtype=float)
    res = simulate(z, scheme, params, potential, drift, cfg.T_total, observer=acc, sigma=sigma,
                   replicate_ids=ids)
    diverged = res.diverged_step >= 0
    with np.errstate(invalid="ignore"):
        avg = acc.total / acc.n_post
        means = acc.batches / acc.m if acc.m else np.full_like(acc.batches, np.nan)
        avar = cfg.batch_duration(params.delta) * np.var(means, axis=1, ddof=1)
    avg[diverged] = np.nan
    avar[diverged] = np.nan
    return avg, avar, diverged


def _moments(x):
    x = x[np.isfinite(x)]
    if x.size == 0:
        return float("nan"), float("nan")
    std = float(np.std(x, ddof=1)) if x.size > 1 else float("nan")
    return float(np.mean(x)), std


def replicate_ensemble(scheme, params, cfg, potential, drift, true_average, z0=None, sigma=None,
                       n_jobs=1, replicate_ids=None):
    """Run ``cfg.n_replicates`` independent trajectories and aggregate them.

    Replicate ``r`` uses the random stream ``(params.seed, r)``, so the
    result does not depend on ``n_jobs``. Diverged replicates are excluded
    from the moments and counted in ``divergence_fraction``. ``z0`` is a
    single initial state (default: the origin) or one row per replicate.
    """
    ids = np.arange(cfg.n_replicates) if replicate_ids is None else np.asarray(replicate_ids)
    n = ids.size
    z0 = np.zeros(potential.dimension) if z0 is None else np.asarray(z0, dtype=float)
    z0 = np.broadcast_to(z0, (n, potential.dimension))
    if n == 0:
        nan = float("nan")
        return EnsembleSummary(scheme, params, 0, nan, nan, nan, nan, nan,
                               np.empty(0), np.empty(0), np.empty(0), np.empty(0, dtype=bool))
    n_jobs = max(1, min(int(n_jobs), n))
    pos = [c for c in np.array_split(np.arange(n), n_jobs) if c.size]
    tasks = [(scheme, params, cfg, potential, drift, sigma, z0[c], ids[c]) for c in pos]
    if n_jobs == 1:
        results = [_run_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_chunk, tasks))
    avg = np.concatenate([r[0] for r in results])
    avar = np.concatenate([r[1] for r in results])
    diverged = np.concatenate([r[2] for r in results])
    errs = np.abs(avg - true_average)
    mean_err, std_err = _moments(errs)
    mean_avar, std_avar = _moments(avar)
    logger.info("%s eps=%g: %d/%d replicates diverged", scheme, params.eps, int(diverged.sum()), n)
    return EnsembleSummary(
        scheme=scheme,
        params=params,
        n_replicates=n,
        mean_err=mean_err,
        std_err=std_err,
        mean_avar=mean_avar,
        std_avar=std_avar,
        divergence_fraction=float(diverged.mean()),
        time_averages=avg,
        errs=errs,
        avars=avar,
        diverged=diverged,
    )
