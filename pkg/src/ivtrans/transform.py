"""Profile estimate of the unspecified monotone transform at a fixed beta.

At the k-th distinct event time the step value ``l_k`` solves

    sum_{i at risk} [Lambda(eta_i + l_k) - Lambda(eta_i + l_{k-1})] = d_k

with ``Lambda(eta + l_0) = 0`` (the transform is -inf before the first
event). Each left side is continuous and strictly increasing in ``l_k`` so
every step has exactly one root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .data import RiskSets, SurvivalDataset, risk_sets
from .errors import BracketError, DegenerateRiskSetError, ShapeError
from .hazard import HazardFamily, _cumhaz_ufunc, cumhaz_scalar, hazard_scalar

FTOL = 1e-12
MAX_DOUBLINGS = 60
MAX_NEWTON = 200

_OK, _EMPTY_RISK_SET, _NO_BRACKET = 0, 1, 2


@dataclass(frozen=True, eq=False)
class StepTransform:
    """Right-continuous step function on the distinct event times."""

    event_times: np.ndarray
    values: np.ndarray
    event_counts: np.ndarray

    @property
    def K(self) -> int:
        return self.event_times.shape[0]

    def __call__(self, t):
        """Value at ``t``; ``-inf`` before the first event time."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="right") - 1
        out = np.where(idx >= 0, self.values[np.maximum(idx, 0)], -np.inf)
        return float(out) if out.ndim == 0 else out

    def pairs(self) -> list[tuple[float, float]]:
        return [(float(t), float(v)) for t, v in zip(self.event_times, self.values)]


@numba.njit(cache=True)
def _step_residual(eta, start, x, prev, r, d):
    """f(x) and f'(x) for one step; ``prev`` holds Lambda(eta_i + l_{k-1})."""
    f = 0.0
    df = 0.0
    for i in range(start, eta.shape[0]):
        f += cumhaz_scalar(eta[i] + x, r) - prev[i]
        df += hazard_scalar(eta[i] + x, r)
    return f - d, df


@numba.njit(cache=True)
def _solve_steps(eta, risk_start, counts, r, ftol, max_doublings):
    n = eta.shape[0]
    K = risk_start.shape[0]
    values = np.empty(K)
    prev = np.zeros(n)
    for k in range(K):
        start = risk_start[k]
        if start >= n:
            return values, _EMPTY_RISK_SET, k
        d = float(counts[k])
        if k == 0:
            # Lambda(t) <= exp(t) for every r >= 0, so this is a lower bound
            top = eta[start]
            for i in range(start, n):
                top = max(top, eta[i])
            acc = 0.0
            for i in range(start, n):
                acc += math.exp(eta[i] - top)
            a = math.log(d) - (top + math.log(acc))
        else:
            a = values[k - 1]
            for i in range(start, n):
                prev[i] = cumhaz_scalar(eta[i] + a, r)
        fa, _ = _step_residual(eta, start, a, prev, r, d)
        if abs(fa) <= ftol:
            values[k] = a
            continue
        # rounding can put the first-step guess a hair past the root
        width = 1.0
        doublings = 0
        while fa > 0.0:
            a -= width
            width *= 2.0
            doublings += 1
            if doublings > max_doublings:
                return values, _NO_BRACKET, k
            fa, _ = _step_residual(eta, start, a, prev, r, d)
        width = 1.0
        b = a + width
        fb, _ = _step_residual(eta, start, b, prev, r, d)
        doublings = 0
        while fb < 0.0:
            a = b
            width *= 2.0
            b = a + width
            doublings += 1
            if doublings > max_doublings:
                return values, _NO_BRACKET, k
            fb, _ = _step_residual(eta, start, b, prev, r, d)
        # f is convex and increasing, so Newton from the right end is monotone
        x = b
        for _ in range(MAX_NEWTON):
            fx, dfx = _step_residual(eta, start, x, prev, r, d)
            if abs(fx) <= ftol:
                break
            if fx < 0.0:
                a = x
            else:
                b = x
            x_new = x - fx / dfx if dfx > 0.0 else math.nan
            if not (a < x_new < b):
                x_new = 0.5 * (a + b)
            if b - a <= 4.0 * 2.220446049250313e-16 * max(1.0, abs(x)):
                break
            x = x_new
        values[k] = x
    return values, _OK, -1


def _check_design(design, dataset: SurvivalDataset) -> np.ndarray:
    design = np.asarray(design, dtype=float)
    if design.ndim == 1:
        design = design[:, None]
    if design.ndim != 2 or design.shape[0] != dataset.n:
        raise ShapeError(f"design must have {dataset.n} rows, got shape {design.shape}")
    return design


def _linear_predictor(beta, design: np.ndarray) -> np.ndarray:
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.shape != (design.shape[1],):
        raise ShapeError(f"beta must have length {design.shape[1]}, got {beta.shape}")
    return design @ beta


def profile_values(eta_sorted: np.ndarray, rs: RiskSets, family: HazardFamily) -> np.ndarray:
    """Solve the recursion for a linear predictor already in canonical order."""
    values, code, k = _solve_steps(
        np.ascontiguousarray(eta_sorted, dtype=float), rs.risk_start, rs.event_counts,
        family.r, FTOL, MAX_DOUBLINGS,
    )
    if code == _EMPTY_RISK_SET:
        raise DegenerateRiskSetError(f"empty risk set at event time {rs.event_times[k]!r}", k)
    if code == _NO_BRACKET:
        raise BracketError(
            f"could not bracket the transform step at event time {rs.event_times[k]!r}",
            float(rs.event_times[k]),
        )
    return values


def solve_transform(beta, design, dataset: SurvivalDataset, family: HazardFamily) -> StepTransform:
    """Step-function transform estimate at fixed ``beta``.

    ``design`` rows line up with ``dataset`` records.
    """
    design = _check_design(design, dataset)
    eta = _linear_predictor(beta, design)
    rs = risk_sets(dataset)
    values = profile_values(eta[rs.order], rs, family)
    return StepTransform(rs.event_times, values, rs.event_counts)


def increments_sorted(eta_sorted, values, rs: RiskSets, family: HazardFamily, fn=_cumhaz_ufunc):
    """(n, K) matrix ``Y_ik [F(eta_i + l_k) - F(eta_i + l_{k-1})]`` in sorted order."""
    cur = fn(eta_sorted[:, None] + values[None, :], family.r)
    prev = np.zeros_like(cur)
    prev[:, 1:] = cur[:, :-1]
    return np.where(rs.at_risk(), cur - prev, 0.0)


def cumhaz_increments(
    transform: StepTransform, beta, design, dataset: SurvivalDataset, family: HazardFamily
) -> np.ndarray:
    """Compensator increments per record and event time, rows in dataset order."""
    design = _check_design(design, dataset)
    eta = _linear_predictor(beta, design)
    rs = risk_sets(dataset)
    if rs.K != transform.K or not np.array_equal(rs.event_times, transform.event_times):
        raise ShapeError("transform event times do not match the dataset")
    inc_sorted = increments_sorted(eta[rs.order], transform.values, rs, family)
    out = np.empty_like(inc_sorted)
    out[rs.order] = inc_sorted
    return out
