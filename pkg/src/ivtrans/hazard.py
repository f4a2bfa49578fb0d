"""Error-distribution hazard family ``lambda_r(t) = e^t / (1 + r e^t)``.

``r = 0`` gives the extreme-value error (proportional hazards) and ``r = 1``
the logistic error (proportional odds). For ``r > 0`` everything is written
in terms of ``s = t + log r``::

    lambda(t)  = expit(s) / r
    Lambda(t)  = softplus(s) / r
    lambda'(t) = expit(s) * expit(-s) / r

which stays finite for any finite ``t``. The scalar kernels are compiled with
numba so the transform solver can call them from inside its own loops.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numba
import numpy as np

from .errors import DomainError, ValidationError

# exp() overflows just above 709.78
MAX_EXP_ARG = 709.0


@dataclass(frozen=True)
class HazardFamily:
    """Known hazard of the model error, indexed by ``r >= 0``."""

    r: float = 0.0

    def __post_init__(self):
        r = float(self.r)
        if not math.isfinite(r) or r < 0:
            raise ValidationError(f"family index r must be finite and >= 0, got {self.r!r}")
        object.__setattr__(self, "r", r)

    @classmethod
    def parse(cls, text: str) -> "HazardFamily":
        """Build a family from ``"ph"``, ``"po"`` or ``"r=<float>"``."""
        key = text.strip().lower()
        if key == "ph":
            return cls(0.0)
        if key == "po":
            return cls(1.0)
        m = re.fullmatch(r"r\s*=\s*(\S+)", key)
        if m:
            try:
                return cls(float(m.group(1)))
            except ValueError:
                pass
        raise ValidationError(f"unknown family {text!r}; expected ph, po or r=<float>")

    @property
    def label(self) -> str:
        if self.r == 0.0:
            return "ph"
        if self.r == 1.0:
            return "po"
        return f"r={self.r!r}"


# ---------------------------------------------------------------------------
# scalar kernels (t, r) -> float; callable from other njit code

@numba.njit(cache=True)
def _expit(s):
    if s >= 0.0:
        return 1.0 / (1.0 + math.exp(-s))
    e = math.exp(s)
    return e / (1.0 + e)


@numba.njit(cache=True)
def _softplus(s):
    if s > 0.0:
        return s + math.log1p(math.exp(-s))
    return math.log1p(math.exp(s))


@numba.njit(cache=True)
def hazard_scalar(t, r):
    if r == 0.0:
        return math.exp(min(t, MAX_EXP_ARG))
    return _expit(t + math.log(r)) / r


@numba.njit(cache=True)
def cumhaz_scalar(t, r):
    if r == 0.0:
        return math.exp(min(t, MAX_EXP_ARG))
    return _softplus(t + math.log(r)) / r


@numba.njit(cache=True)
def dhazard_scalar(t, r):
    if r == 0.0:
        return math.exp(min(t, MAX_EXP_ARG))
    s = t + math.log(r)
    return _expit(s) * _expit(-s) / r


@numba.njit(cache=True)
def loghazard_scalar(t, r):
    if r == 0.0:
        return min(t, MAX_EXP_ARG)
    s = t + math.log(r)
    return -_softplus(-s) - math.log(r)


@numba.vectorize(["float64(float64, float64)"], cache=True)
def _hazard_ufunc(t, r):
    return hazard_scalar(t, r)


@numba.vectorize(["float64(float64, float64)"], cache=True)
def _cumhaz_ufunc(t, r):
    return cumhaz_scalar(t, r)


@numba.vectorize(["float64(float64, float64)"], cache=True)
def _dhazard_ufunc(t, r):
    return dhazard_scalar(t, r)


@numba.vectorize(["float64(float64, float64)"], cache=True)
def _loghazard_ufunc(t, r):
    return loghazard_scalar(t, r)


# ---------------------------------------------------------------------------
# public API

def _finite(t):
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("argument t must be finite")
    return arr


def _out(arr):
    return float(arr) if arr.ndim == 0 else arr


def hazard(family: HazardFamily, t):
    """Hazard ``e^t / (1 + r e^t)``; scalar or array ``t``."""
    return _out(_hazard_ufunc(_finite(t), family.r))


def cumulative_hazard(family: HazardFamily, t):
    """Cumulative hazard: ``e^t`` for ``r = 0``, ``log(1 + r e^t) / r`` otherwise."""
    return _out(_cumhaz_ufunc(_finite(t), family.r))


def hazard_derivative(family: HazardFamily, t):
    """Derivative of the hazard in ``t``: ``e^t / (1 + r e^t)^2``."""
    return _out(_dhazard_ufunc(_finite(t), family.r))


def log_hazard(family: HazardFamily, t):
    return _out(_loghazard_ufunc(_finite(t), family.r))


def survival(family: HazardFamily, t):
    return _out(np.exp(-np.asarray(cumulative_hazard(family, t))))


def sample_error(family: HazardFamily, u):
    """Inverse survival function: the ``t`` with ``exp(-Lambda(t)) = u``.

    Decreasing in ``u``; feed it uniform draws to sample the model error.
    """
    u = np.asarray(u, dtype=float)
    if not np.all((u > 0.0) & (u < 1.0)):
        raise DomainError("u must lie strictly inside (0, 1)")
    minus_log_u = -np.log(u)
    if family.r == 0.0:
        out = np.log(minus_log_u)
    else:
        out = np.log(np.expm1(family.r * minus_log_u)) - math.log(family.r)
    return _out(out)
