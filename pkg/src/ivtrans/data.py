"""Right-censored survival data with surrogate covariates and instruments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ShapeError(f"{name} must be a matrix, got ndim={m.ndim}")
    return m


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Observed follow-up data.

    Parameters
    ----------
    times : (n,) array
        Observed times ``min(T, C)``; strictly positive and finite.
    status : (n,) array
        Event indicators, 1 if the failure was observed.
    Z : (n, p) array
        Error-prone surrogate covariates.
    W : (n, q) array
        Instruments, ``q >= p``.
    """

    times: np.ndarray
    status: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    z_names: tuple[str, ...] = field(default=())
    w_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        status_raw = np.asarray(self.status).ravel()
        Z = _as_matrix(self.Z, "Z")
        W = _as_matrix(self.W, "W")
        n = times.shape[0]
        if n == 0:
            raise ValidationError("dataset is empty")
        if status_raw.shape[0] != n or Z.shape[0] != n or W.shape[0] != n:
            raise ShapeError(
                f"row counts differ: times={n}, status={status_raw.shape[0]}, "
                f"Z={Z.shape[0]}, W={W.shape[0]}"
            )
        if not np.all(np.isfinite(times)) or np.any(times <= 0):
            raise ValidationError("all times must be finite and strictly positive")
        if not np.all(np.isin(status_raw, (0, 1))):
            raise ValidationError("status must contain only 0 and 1")
        if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(W))):
            raise ValidationError("Z and W must not contain missing or non-finite values")
        if Z.shape[1] == 0:
            raise ShapeError("Z needs at least one column")
        if W.shape[1] < Z.shape[1]:
            raise ValidationError(f"q >= p required (q={W.shape[1]}, p={Z.shape[1]})")
        status = status_raw.astype(np.int64)
        if status.sum() == 0:
            raise ValidationError("at least one observed event is required")
        for name, value in (("times", times), ("status", status), ("Z", Z), ("W", W)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        z_names = tuple(self.z_names) or tuple(f"z{j + 1}" for j in range(Z.shape[1]))
        w_names = tuple(self.w_names) or tuple(f"w{j + 1}" for j in range(W.shape[1]))
        if len(z_names) != Z.shape[1] or len(w_names) != W.shape[1]:
            raise ShapeError("column name count does not match matrix width")
        object.__setattr__(self, "z_names", z_names)
        object.__setattr__(self, "w_names", w_names)

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @property
    def q(self) -> int:
        return self.W.shape[1]

    def canonical_order(self) -> np.ndarray:
        """Permutation sorting records by time, events first on ties, then by
        covariate values and original index.

        Sorting on the covariates as well makes every downstream sum run in
        the same order whatever order the records arrived in.
        """
        keys = [np.arange(self.n)]
        keys += [self.W[:, j] for j in range(self.q - 1, -1, -1)]
        keys += [self.Z[:, j] for j in range(self.p - 1, -1, -1)]
        keys += [-self.status, self.times]
        return np.lexsort(keys)

    def take(self, index) -> "SurvivalDataset":
        index = np.asarray(index)
        return SurvivalDataset(
            self.times[index], self.status[index], self.Z[index], self.W[index],
            self.z_names, self.w_names,
        )

    def sorted(self) -> "SurvivalDataset":
        return self.take(self.canonical_order())


@dataclass(frozen=True, eq=False)
class RiskSets:
    """Event-time bookkeeping in canonical record order.

    ``risk_start[k]`` is the first sorted position still at risk at the k-th
    distinct event time, so the risk set is the suffix ``[risk_start[k]:]``.
    ``last_event[i]`` is the index of the last event time not after record
    ``i``'s own time (-1 if none) and ``event_index[i]`` the event time at
    which record ``i`` failed (-1 if censored).
    """

    order: np.ndarray
    event_times: np.ndarray
    event_counts: np.ndarray
    risk_start: np.ndarray
    last_event: np.ndarray
    event_index: np.ndarray

    @property
    def K(self) -> int:
        return self.event_times.shape[0]

    @property
    def n(self) -> int:
        return self.order.shape[0]

    def at_risk(self) -> np.ndarray:
        """(n, K) boolean matrix ``Y_i(t_k)`` in sorted order."""
        pos = np.arange(self.n)[:, None]
        return pos >= self.risk_start[None, :]


def risk_sets(dataset: SurvivalDataset) -> RiskSets:
    order = dataset.canonical_order()
    times = dataset.times[order]
    status = dataset.status[order]
    event_times, event_counts = np.unique(times[status == 1], return_counts=True)
    risk_start = np.searchsorted(times, event_times, side="left")
    last_event = np.searchsorted(event_times, times, side="right") - 1
    event_index = np.where(status == 1, last_event, -1)
    return RiskSets(
        order=order,
        event_times=event_times,
        event_counts=event_counts.astype(np.int64),
        risk_start=risk_start.astype(np.int64),
        last_event=last_event.astype(np.int64),
        event_index=event_index.astype(np.int64),
    )
