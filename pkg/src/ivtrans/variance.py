"""Plug-in sandwich covariance for the two-stage estimator, plus a bootstrap.

All population expectations become averages over records and every integral
against the transform becomes a sum over event times. Integrals of the form
``lambda(x b + l) dl`` and ``lambda'(x b + l) dl`` are taken as the exact
increments of ``Lambda`` and ``lambda`` across each jump of the step
transform, which keeps the first jump (from -inf) finite. The weight
function ``B`` inside the centring ``mu`` uses the matching per-step product
form, so ``Sigma_beta`` is exactly minus the derivative of the profiled score
divided by n.

The asymptotic covariance of ``sqrt(n) (beta_hat - beta)`` is

    S_beta^{-1} (S_1 - S_2 + 2 S_12) S_beta^{-T}

and ``covariance`` on the result is that matrix divided by n.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .data import SurvivalDataset, risk_sets
from .errors import (
    BootstrapInstabilityError,
    DegenerateRiskSetError,
    DomainError,
    IVTransError,
    InvalidCovarianceError,
    PreconditionError,
    SingularInformationError,
    ValidationError,
)
from .hazard import HazardFamily, _dhazard_ufunc, _hazard_ufunc, _loghazard_ufunc
from .iv import IVRegressionFit
from .transform import increments_sorted

if TYPE_CHECKING:
    from .estimate import FitOptions, FitResult

INFO_COND_MAX = 1e12


@dataclass(frozen=True, eq=False)
class MartingaleResiduals:
    """``increments[i, k] = dN_i(t_k) - Y_i(t_k) dLambda_ik``; rows follow
    the fit's (canonical) record order."""

    increments: np.ndarray
    compensator: np.ndarray
    event_times: np.ndarray

    def column_sums(self) -> np.ndarray:
        return self.increments.sum(axis=0)

    def totals(self) -> np.ndarray:
        """Per-record residual ``delta_i - Lambda(x_i b + l(T_i))``."""
        return self.increments.sum(axis=1)


@dataclass(frozen=True, eq=False)
class VarianceComponents:
    B_matrix: np.ndarray
    mu: np.ndarray
    mu_W: np.ndarray
    Sigma_beta: np.ndarray
    Sigma_Q: np.ndarray
    Sigma_1: np.ndarray
    Sigma_2: np.ndarray
    Sigma_12: np.ndarray
    Sigma_total: np.ndarray
    sandwich: np.ndarray
    covariance: np.ndarray
    n: int

    def as_dict(self) -> dict:
        return {name: getattr(self, name).tolist() for name in (
            "Sigma_beta", "Sigma_Q", "Sigma_1", "Sigma_2", "Sigma_12", "Sigma_total", "sandwich",
        )}


class _Ingredients:
    """Sorted arrays shared by the residual, B and sandwich computations."""

    def __init__(self, result: "FitResult"):
        if not result.converged:
            raise PreconditionError("variance quantities need a converged fit")
        ds = result.dataset
        self.rs = rs = risk_sets(ds)
        if not np.array_equal(rs.event_times, result.transform.event_times):
            raise PreconditionError("transform does not belong to this dataset")
        self.family = result.family
        self.n = ds.n
        self.x = result.design[rs.order]
        self.W = ds.W[rs.order]
        self.status = ds.status[rs.order]
        self.beta = result.beta_hat
        self.eta = self.x @ self.beta
        self.values = result.transform.values
        self.Y = rs.at_risk()

    def d_cumhaz(self):
        return increments_sorted(self.eta, self.values, self.rs, self.family)

    def d_hazard(self):
        return increments_sorted(self.eta, self.values, self.rs, self.family, fn=_hazard_ufunc)

    def cumulative_log_B(self, method: str = "stieltjes") -> np.ndarray:
        """``L_k`` with ``B(t_k, t_s) = exp(L_k - L_s)``.

        ``"stieltjes"`` sums ``rho_j (l_j - l_{j-1})`` with
        ``rho_j = sum Y lambda' / sum Y lambda`` at ``l_j``. ``"product"``
        uses the exact per-step factor ``S_j / S_j^-`` where ``S_j`` and
        ``S_j^-`` are the at-risk sums of ``lambda`` at ``l_j`` and
        ``l_{j-1}``; it is what differentiating the discrete recursion in
        beta produces, and agrees with the Stieltjes sum to first order in
        the step sizes. For ``r = 0`` both equal ``l_k - l_1``.
        """
        r = self.family.r
        arg = self.eta[:, None] + self.values[None, :]
        den = np.where(self.Y, _hazard_ufunc(arg, r), 0.0).sum(axis=0)
        if np.any(den <= 0):
            k = int(np.argmax(den <= 0))
            raise DegenerateRiskSetError(f"no hazard mass at risk at event {k}", k)
        L = np.zeros(self.rs.K)
        if method == "stieltjes":
            num = np.where(self.Y, _dhazard_ufunc(arg, r), 0.0).sum(axis=0)
            L[1:] = np.cumsum((num / den)[1:] * np.diff(self.values))
        elif method == "product":
            log_lam = _loghazard_ufunc(arg, r)
            log_cur = np.where(self.Y, log_lam, -np.inf)
            log_prev = np.where(self.Y[:, 1:], log_lam[:, :-1], -np.inf)
            step = logsumexp(log_cur[:, 1:], axis=0) - logsumexp(log_prev, axis=0)
            L[1:] = np.cumsum(step)
        else:
            raise ValidationError(f"unknown B method {method!r}")
        return L

    def weights(self, L) -> np.ndarray:
        """Column-normalised weights ``Y_ik lambda(x_i b + l(T_i)) / B(T_i, t_k)``.

        ``l(T_i)`` is the transform at the record's own time; with
        ``Y_ik = 1`` that time is not before ``t_k``.
        """
        m = self.rs.last_event
        own = np.maximum(m, 0)
        log_lam = _loghazard_ufunc(self.eta + self.values[own], self.family.r)
        logw = (log_lam - L[own])[:, None] + L[None, :]
        logw = np.where(self.Y, logw, -np.inf)
        logw -= logw.max(axis=0, keepdims=True)
        w = np.exp(logw)
        return w / w.sum(axis=0, keepdims=True)


def martingale_residuals(result: "FitResult") -> MartingaleResiduals:
    ing = _Ingredients(result)
    comp = ing.d_cumhaz()
    dN = np.zeros_like(comp)
    events = np.flatnonzero(ing.rs.event_index >= 0)
    dN[events, ing.rs.event_index[events]] = 1.0
    return MartingaleResiduals(dN - comp, comp, ing.rs.event_times)


def estimate_B(result: "FitResult", method: str = "stieltjes") -> np.ndarray:
    """Lower-triangular K x K matrix ``B(t_k, t_s)``, ``s <= k``.

    See :meth:`_Ingredients.cumulative_log_B` for ``method``; the sandwich
    uses ``"product"``.

    Entries can overflow to ``inf`` when the transform spans hundreds of
    units; the sandwich itself works with logs.
    """
    return _b_from_log(_Ingredients(result).cumulative_log_B(method))


def _weighted_cross(a, mu_a, b, mu_b, inc):
    """``sum_k sum_i inc_ik (a_i - mu_a[k]) (b_i - mu_b[k])^T``."""
    row = inc.sum(axis=1)
    col = inc.sum(axis=0)
    ia = inc.T @ a  # (K, pa)
    ib = inc.T @ b
    return (a.T @ (b * row[:, None]) - ia.T @ mu_b - mu_a.T @ ib + mu_a.T @ (mu_b * col[:, None]))


def sandwich_covariance(result: "FitResult", iv_fit: IVRegressionFit | None = None) -> VarianceComponents:
    """Plug-in estimate of every component of the asymptotic covariance.

    Without ``iv_fit`` (a naive fit on the surrogates) the instrument term
    ``Sigma_1`` is zero.
    """
    ing = _Ingredients(result)
    n = ing.n
    L = ing.cumulative_log_B("product")
    w = ing.weights(L)
    mu = w.T @ ing.x
    mu_W = w.T @ ing.W
    d_lam = ing.d_hazard()
    d_cum = ing.d_cumhaz()
    x, W = ing.x, ing.W

    zeros_x = np.zeros_like(mu)
    Sigma_beta = _weighted_cross(x, mu, x, zeros_x, d_lam) / n
    Sigma_Q = _weighted_cross(x, zeros_x, W, mu_W, d_lam) / n
    Sigma_2 = _weighted_cross(x, mu, x, mu, d_cum) / n
    # the centring function for the estimated-Q design is mu itself once
    # Q is replaced by its estimate
    Sigma_12 = _weighted_cross(x, mu, x, mu, d_cum) / n
    if iv_fit is None:
        Sigma_1 = np.zeros_like(Sigma_2)
    else:
        noise = float(ing.beta @ iv_fit.residual_cov @ ing.beta)
        Sigma_1 = Sigma_Q @ (n * iv_fit.gram_inverse) @ Sigma_Q.T * noise
    Sigma_total = Sigma_1 - Sigma_2 + 2.0 * Sigma_12

    if not np.all(np.isfinite(Sigma_beta)) or np.linalg.cond(Sigma_beta) > INFO_COND_MAX:
        raise SingularInformationError("Sigma_beta is numerically singular")
    inv = np.linalg.inv(Sigma_beta)
    sandwich = inv @ Sigma_total @ inv.T
    sandwich = 0.5 * (sandwich + sandwich.T)
    comps = VarianceComponents(
        B_matrix=_b_from_log(L), mu=mu, mu_W=mu_W, Sigma_beta=Sigma_beta, Sigma_Q=Sigma_Q,
        Sigma_1=Sigma_1, Sigma_2=Sigma_2, Sigma_12=Sigma_12, Sigma_total=Sigma_total,
        sandwich=sandwich, covariance=sandwich / n, n=n,
    )
    diag = np.diag(sandwich)
    if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
        raise InvalidCovarianceError(f"sandwich has non-positive diagonal {diag}", comps)
    return comps


def _b_from_log(L):
    diff = L[:, None] - L[None, :]
    with np.errstate(over="ignore"):
        return np.where(np.tril(np.ones((L.size, L.size), dtype=bool)), np.exp(diff), 0.0)


def confidence_intervals(beta_hat, covariance, level: float = 0.95) -> np.ndarray:
    """Wald intervals ``beta_j -/+ z sqrt(cov_jj)`` as a (p, 2) array."""
    if not 0.0 < level < 1.0:
        raise DomainError(f"confidence level must lie in (0, 1), got {level}")
    beta_hat = np.atleast_1d(np.asarray(beta_hat, dtype=float))
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    var = np.diag(cov)
    if np.any(var < 0) or not np.all(np.isfinite(var)):
        raise ValidationError("covariance diagonal must be finite and non-negative")
    half = norm.ppf(0.5 * (1.0 + level)) * np.sqrt(var)
    return np.column_stack([beta_hat - half, beta_hat + half])


def bootstrap_covariance(
    dataset: SurvivalDataset,
    family: HazardFamily,
    options: "FitOptions | None",
    n_boot: int,
    seed: int,
    *,
    naive: bool = False,
    estimator: Callable[[SurvivalDataset], np.ndarray] | None = None,
    max_failure_rate: float = 0.2,
) -> np.ndarray:
    """Covariance of beta_hat over records resampled with replacement.

    Resample ``b`` draws from its own generator spawned off ``seed``, so
    the result does not depend on evaluation order. ``estimator`` swaps in
    another statistic of a dataset; by default it is the model fit.
    """
    from .estimate import FitOptions, fit

    if n_boot < 50:
        raise ValidationError("n_boot must be at least 50")
    if estimator is None:
        inner = FitOptions() if options is None else options
        from dataclasses import replace

        inner = replace(inner, variance="none")

        def estimator(ds):
            return fit(ds, family, inner, naive=naive).beta_hat

    streams = np.random.SeedSequence(int(seed) & (2**64 - 1)).spawn(n_boot)
    draws, failures = [], 0
    for ss in streams:
        rng = np.random.Generator(np.random.Philox(ss))
        idx = rng.integers(0, dataset.n, dataset.n)
        try:
            draws.append(np.atleast_1d(estimator(dataset.take(idx))))
        except IVTransError:
            failures += 1
    rate = failures / n_boot
    if rate > max_failure_rate:
        raise BootstrapInstabilityError(
            f"{failures} of {n_boot} bootstrap refits failed", rate
        )
    reps = np.vstack(draws)
    centred = reps - reps.mean(axis=0)
    cov = centred.T @ centred / (reps.shape[0] - 1)
    return 0.5 * (cov + cov.T)
