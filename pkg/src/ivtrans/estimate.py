"""Regression coefficients from the profiled martingale estimating equation.

``fit`` runs the two-stage procedure: regress Z on W, then solve

    U(beta) = sum_i x_i [delta_i - Lambda(x_i beta + l_beta(T_i))] = 0

where ``x_i`` is the imputed covariate row and ``l_beta`` the profile
transform at ``beta``. The sum telescopes from the per-event-time form
``sum_k sum_i x_i [dN_i(t_k) - Y_i(t_k) dLambda_ik]`` because a record stays
at risk exactly up to its own time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import RiskSets, SurvivalDataset, risk_sets
from .errors import (
    BracketError,
    DegenerateRiskSetError,
    NonConvergenceError,
    ShapeError,
    SolverStallError,
    ValidationError,
)
from .hazard import HazardFamily, _cumhaz_ufunc
from .iv import IVRegressionFit, estimate_Q
from .transform import StepTransform, _check_design, _linear_predictor, profile_values

log = logging.getLogger(__name__)

VARIANCE_METHODS = ("plugin", "bootstrap", "none")


@dataclass(frozen=True)
class FitOptions:
    """Controls for the outer iteration and the variance step.

    ``score_tol`` bounds ``||U|| / n``; ``jacobian_step`` is relative,
    ``h_j = jacobian_step * max(1, |beta_j|)``.
    """

    beta_init: tuple[float, ...] | None = None
    max_outer_iters: int = 100
    beta_tol: float = 1e-6
    score_tol: float = 1e-8
    jacobian_step: float = 1e-6
    step_halving_max: int = 30
    variance: str = "plugin"
    ci_level: float = 0.95
    boot_reps: int = 200
    boot_seed: int = 0

    def __post_init__(self):
        for name in ("beta_tol", "score_tol", "jacobian_step"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be strictly positive")
        if self.max_outer_iters < 1 or self.step_halving_max < 1:
            raise ValidationError("iteration limits must be positive")
        if self.variance not in VARIANCE_METHODS:
            raise ValidationError(f"variance must be one of {VARIANCE_METHODS}")
        if not 0.0 < self.ci_level < 1.0:
            raise ValidationError("ci_level must lie in (0, 1)")
        if self.beta_init is not None:
            object.__setattr__(self, "beta_init", tuple(float(b) for b in self.beta_init))


@dataclass(frozen=True, eq=False)
class FitResult:
    """Estimates plus everything needed to rebuild the variance.

    ``dataset`` and ``design`` are stored in canonical record order (see
    :meth:`SurvivalDataset.canonical_order`).
    """

    beta_hat: np.ndarray
    transform: StepTransform
    covariance: np.ndarray | None
    std_errors: np.ndarray | None
    conf_intervals: np.ndarray | None
    iterations: int
    converged: bool
    final_score_norm: float
    dataset: SurvivalDataset
    design: np.ndarray
    family: HazardFamily
    iv_fit: IVRegressionFit | None
    naive: bool = False
    options: FitOptions = field(default_factory=FitOptions)
    components: object | None = None
    variance_note: str = ""

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def p(self) -> int:
        return self.beta_hat.shape[0]


def score_U1(beta, transform: StepTransform, design, dataset: SurvivalDataset, family: HazardFamily):
    """Estimating function for beta at a given transform; a p-vector."""
    design = _check_design(design, dataset)
    eta = _linear_predictor(beta, design)
    rs = risk_sets(dataset)
    if rs.K != transform.K or not np.array_equal(rs.event_times, transform.event_times):
        raise ShapeError("transform event times do not match the dataset")
    x = design[rs.order]
    status = dataset.status[rs.order]
    return _score_sorted(x, eta[rs.order], status, transform.values, rs, family)


def _score_sorted(x, eta, status, values, rs: RiskSets, family: HazardFamily) -> np.ndarray:
    m = rs.last_event
    lam = np.where(m >= 0, _cumhaz_ufunc(eta + values[np.maximum(m, 0)], family.r), 0.0)
    return x.T @ (status - lam)


class _Profile:
    """Profiled score ``beta -> U(beta, l_beta)`` on a canonical-order dataset."""

    def __init__(self, design: np.ndarray, dataset: SurvivalDataset, family: HazardFamily):
        self.rs = risk_sets(dataset)
        self.x = np.ascontiguousarray(design[self.rs.order])
        self.status = dataset.status[self.rs.order].astype(float)
        self.family = family
        self.n = dataset.n

    def __call__(self, beta):
        eta = self.x @ beta
        values = profile_values(eta, self.rs, self.family)
        return _score_sorted(self.x, eta, self.status, values, self.rs, self.family), values

    def jacobian(self, beta, U, rel_step):
        p = beta.shape[0]
        J = np.empty((p, p))
        for j in range(p):
            h = rel_step * max(1.0, abs(beta[j]))
            probe = beta.copy()
            probe[j] += h
            J[:, j] = (self(probe)[0] - U) / h
        return J


def _solve_beta(design, dataset, family, options: FitOptions):
    """Outer quasi-Newton loop. Returns (beta, values, iterations, score_norm)."""
    profile = _Profile(design, dataset, family)
    n, p = dataset.n, design.shape[1]
    if options.beta_init is None:
        beta = np.zeros(p)
    else:
        beta = np.asarray(options.beta_init, dtype=float)
        if beta.shape != (p,):
            raise ShapeError(f"beta_init must have length {p}")
    U, values = profile(beta)
    norm = float(np.linalg.norm(U))

    def stall(msg, it):
        return SolverStallError(msg, beta.copy(), norm / n, it)

    for it in range(1, options.max_outer_iters + 1):
        J = profile.jacobian(beta, U, options.jacobian_step)
        try:
            step = -np.linalg.solve(J, U)
        except np.linalg.LinAlgError:
            step = np.full(p, np.nan)
        if not np.all(np.isfinite(step)):
            raise stall("finite-difference Jacobian is singular", it)
        t = 1.0
        for _ in range(options.step_halving_max + 1):
            cand = beta + t * step
            try:
                U_c, values_c = profile(cand)
                norm_c = float(np.linalg.norm(U_c))
            except (BracketError, DegenerateRiskSetError, FloatingPointError):
                norm_c = np.inf
            if np.isfinite(norm_c) and (norm_c <= norm or norm_c / n <= options.score_tol):
                break
            t *= 0.5
        else:
            raise stall("step halving could not reduce the score norm", it)
        change = float(np.max(np.abs(cand - beta)))
        beta, U, values, norm = cand, U_c, values_c, norm_c
        log.debug("iter %d beta=%s |U|/n=%.3e step=%.3e", it, beta, norm / n, change)
        if change < options.beta_tol and norm / n <= options.score_tol:
            return beta, values, it, norm / n
    raise NonConvergenceError(
        f"no convergence after {options.max_outer_iters} iterations (|U|/n = {norm / n:.3e})",
        beta, norm / n, options.max_outer_iters,
    )


def fit_design(
    design,
    dataset: SurvivalDataset,
    family: HazardFamily,
    options: FitOptions | None = None,
    *,
    iv_fit: IVRegressionFit | None = None,
    naive: bool = False,
) -> FitResult:
    """Second stage only: estimate beta with ``design`` as the covariate matrix.

    ``dataset`` must already be in canonical order. Variance follows
    ``options.variance``.
    """
    options = options or FitOptions()
    design = _check_design(design, dataset)
    try:
        beta, values, iterations, score_norm = _solve_beta(design, dataset, family, options)
    except (NonConvergenceError, SolverStallError) as exc:
        rs = risk_sets(dataset)
        try:
            values = profile_values(design[rs.order] @ exc.beta, rs, family)
        except (BracketError, DegenerateRiskSetError):
            values = np.full(rs.K, np.nan)
        exc.result = FitResult(
            beta_hat=np.asarray(exc.beta, dtype=float),
            transform=StepTransform(rs.event_times, values, rs.event_counts),
            covariance=None, std_errors=None, conf_intervals=None,
            iterations=exc.iterations, converged=False, final_score_norm=exc.score_norm,
            dataset=dataset, design=design, family=family, iv_fit=iv_fit,
            naive=naive, options=options,
        )
        raise
    rs = risk_sets(dataset)
    result = FitResult(
        beta_hat=beta,
        transform=StepTransform(rs.event_times, values, rs.event_counts),
        covariance=None, std_errors=None, conf_intervals=None,
        iterations=iterations, converged=True, final_score_norm=score_norm,
        dataset=dataset, design=design, family=family, iv_fit=iv_fit,
        naive=naive, options=options,
    )
    return attach_variance(result)


def fit(
    dataset: SurvivalDataset,
    family: HazardFamily,
    options: FitOptions | None = None,
    *,
    naive: bool = False,
) -> FitResult:
    """Two-stage estimate of beta.

    With ``naive=True`` the surrogates Z are used directly as the design and
    the instrument stage is skipped.
    """
    ds = dataset.sorted()
    if naive:
        return fit_design(ds.Z, ds, family, options, naive=True)
    iv_fit = estimate_Q(ds)
    return fit_design(iv_fit.imputed_design, ds, family, options, iv_fit=iv_fit)


def attach_variance(result: FitResult) -> FitResult:
    """Fill in covariance, SEs and intervals as ``result.options`` asks."""
    from . import variance

    opts = result.options
    if opts.variance == "none":
        return result
    if opts.variance == "plugin":
        comps = variance.sandwich_covariance(result, result.iv_fit)
        cov = comps.covariance
        note = "plug-in sandwich"
        if result.naive:
            note += "; naive fit: no instrument stage, Sigma_1 = 0 and the cross term reduces to Sigma_2"
    else:
        comps = None
        cov = variance.bootstrap_covariance(
            result.dataset, result.family, opts, opts.boot_reps, opts.boot_seed, naive=result.naive
        )
        note = f"nonparametric bootstrap, {opts.boot_reps} resamples"
    se = np.sqrt(np.diag(cov))
    ci = variance.confidence_intervals(result.beta_hat, cov, opts.ci_level)
    return replace(
        result, covariance=cov, std_errors=se, conf_intervals=ci, components=comps, variance_note=note
    )
