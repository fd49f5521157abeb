"""Argument checks shared by the estimators and the command line."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .integrators import SCHEMES
from .potentials import POTENTIALS, Potential, get_potential
from .sampler import OBSERVABLES, get_observable

__all__ = [
    "check_positive",
    "check_nonnegative_int",
    "check_scheme",
    "check_states",
    "resolve_potential",
    "resolve_observable",
]


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_nonnegative_int(value, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 0:
        raise ValueError(f"{name} must be a nonnegative integer, got {value!r}")
    return int(value)


def check_scheme(scheme):
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    return scheme


def check_states(Z, dimension=2):
    """Finite float array of shape ``(n, dimension)``."""
    Z = check_array(Z, dtype=np.float64, ensure_2d=True)
    if Z.shape[1] != dimension:
        raise ValueError(f"expected states with {dimension} coordinates, got {Z.shape[1]}")
    return Z


def resolve_potential(potential):
    if isinstance(potential, Potential):
        return potential
    if isinstance(potential, str):
        return get_potential(potential)
    raise ValueError(f"potential must be one of {sorted(POTENTIALS)} or a Potential instance")


def resolve_observable(observable):
    if callable(observable):
        return observable
    if observable in OBSERVABLES:
        return get_observable(observable)
    raise ValueError(f"unknown observable {observable!r}; choose from {sorted(OBSERVABLES)}")
