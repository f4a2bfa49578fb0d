"""Monte Carlo studies for the three instrument designs.

Each replicate draws its own independent streams keyed by
``(seed, replicate_index, stream)`` so results do not depend on how the
replicates are spread over worker processes.

Survival times ``T = exp(-X beta + e)`` span hundreds of orders of magnitude
for the two-covariate design, so times are generated on the log scale. When
the smallest observed log-time is below ``-700`` every time is multiplied by
one common factor before exponentiating; the estimator only uses the ordering
of the times, which a common factor preserves.
"""

from __future__ import annotations

import concurrent.futures as cf
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import SurvivalDataset
from .errors import (
    CalibrationError,
    IVTransError,
    PreconditionError,
    StudyQualityError,
    ValidationError,
)
from .estimate import FitOptions, attach_variance, fit
from .hazard import HazardFamily, sample_error

CASE_DEFAULTS = {
    "i": {"Q": ((3.0,),), "instrument_means": (4.0,)},
    "ii": {"Q": ((2.0,), (3.0,)), "instrument_means": (2.0, 4.0)},
    "iii": {"Q": ((2.0, 0.0), (0.0, 5.0)), "instrument_means": (2.0, 4.0)},
}

C_MAX = 1e12
CALIBRATION_DRAWS = 100_000
MIN_LOG_TIME = -700.0

_REPLICATE, _CALIBRATION = 0, 1
_W, _EPS, _V, _E, _C = range(5)


@dataclass(frozen=True)
class CaseSpec:
    case_id: str
    n: int
    beta: tuple[float, ...]
    Q: tuple[tuple[float, ...], ...]
    family_r: float = 0.0
    instrument_means: tuple[float, ...] = (4.0,)
    error_sd_v: float = 1.0
    error_sd_eps: float = 1.0
    target_censoring: float = 0.20
    reps: int = 1000
    seed: int = 0
    censoring_constant: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in np.atleast_1d(self.beta)))
        object.__setattr__(self, "Q", tuple(tuple(float(v) for v in row) for row in np.atleast_2d(self.Q)))
        object.__setattr__(self, "instrument_means", tuple(float(m) for m in self.instrument_means))
        if self.case_id not in CASE_DEFAULTS:
            raise ValidationError(f"case_id must be one of {sorted(CASE_DEFAULTS)}")
        q, p = np.shape(self.Q)
        if len(self.beta) != p or len(self.instrument_means) != q or q < p:
            raise ValidationError(f"inconsistent dimensions: beta {len(self.beta)}, Q {q}x{p}, "
                                  f"means {len(self.instrument_means)}")
        if self.n < 2 or self.reps < 1:
            raise ValidationError("n must be >= 2 and reps >= 1")
        if min(self.instrument_means) <= 0:
            raise ValidationError("instrument means must be positive")
        if self.error_sd_v < 0 or self.error_sd_eps < 0 or self.family_r < 0:
            raise ValidationError("error standard deviations and family_r must be non-negative")
        if not 0.0 <= self.target_censoring < 1.0:
            raise ValidationError("target_censoring must lie in [0, 1)")

    @classmethod
    def for_case(cls, case_id: str, n: int, beta, **kwargs) -> "CaseSpec":
        """Spec with the design defaults for ``case_id`` filled in."""
        if case_id not in CASE_DEFAULTS:
            raise ValidationError(f"case_id must be one of {sorted(CASE_DEFAULTS)}")
        base = dict(CASE_DEFAULTS[case_id])
        base.update(kwargs)
        return cls(case_id=case_id, n=n, beta=tuple(np.atleast_1d(beta)), **base)

    @property
    def p(self) -> int:
        return len(self.beta)

    @property
    def q(self) -> int:
        return len(self.Q)

    @property
    def family(self) -> HazardFamily:
        return HazardFamily(self.family_r)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta"] = list(self.beta)
        d["Q"] = [list(row) for row in self.Q]
        d["instrument_means"] = list(self.instrument_means)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CaseSpec":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SimulatedData:
    """A generated dataset plus the hidden truth behind it."""

    dataset: SurvivalDataset
    X: np.ndarray
    log_T: np.ndarray
    log_C: np.ndarray
    log_time_shift: float


def _stream(seed: int, *key: int) -> np.random.Generator:
    entropy = [int(seed) & (2**64 - 1), *key]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    # strictly inside (0, 1)
    return (rng.integers(0, 2**53, size=size) + 0.5) / 2.0**53


def _draw_truth(spec: CaseSpec, n: int, key: tuple[int, ...]):
    Q = np.asarray(spec.Q)
    means = np.asarray(spec.instrument_means)
    W = _stream(spec.seed, *key, _W).exponential(size=(n, spec.q)) * means
    eps = _stream(spec.seed, *key, _EPS).standard_normal((n, spec.p)) * spec.error_sd_eps
    v = _stream(spec.seed, *key, _V).standard_normal((n, spec.p)) * spec.error_sd_v
    X = W @ Q + eps
    Z = X + v
    e = np.atleast_1d(sample_error(spec.family, _open_uniform(_stream(spec.seed, *key, _E), n)))
    log_T = -X @ np.asarray(spec.beta) + e
    log_U = np.log(_open_uniform(_stream(spec.seed, *key, _C), n))
    return W, X, Z, log_T, log_U


def generate_case(spec: CaseSpec, replicate_index: int) -> SimulatedData:
    """One replicate dataset; deterministic in ``(spec.seed, replicate_index)``."""
    if spec.censoring_constant is None:
        raise PreconditionError("censoring constant not calibrated; call calibrate_censoring first")
    if replicate_index < 0:
        raise ValidationError("replicate_index must be non-negative")
    W, X, Z, log_T, log_U = _draw_truth(spec, spec.n, (_REPLICATE, int(replicate_index)))
    log_C = math.log(spec.censoring_constant) + log_U
    status = (log_T <= log_C).astype(np.int64)
    log_obs = np.minimum(log_T, log_C)
    shift = min(0.0, float(log_obs.min()) - MIN_LOG_TIME)
    if log_obs.max() - shift > 709.0:
        raise ValidationError("observed log-times span too wide a range to represent")
    times = np.exp(log_obs - shift)
    ds = SurvivalDataset(times, status, Z, W) if status.any() else None
    if ds is None:
        raise ValidationError(f"replicate {replicate_index} has no observed events")
    return SimulatedData(ds, X, log_T, log_C, shift)


def _censoring_rate(thresholds: np.ndarray, log_c: float) -> float:
    return float(np.mean(thresholds > log_c))


def calibrate_censoring(spec: CaseSpec, n_draws: int = CALIBRATION_DRAWS, tol: float = 0.01) -> float:
    """Uniform censoring bound ``c`` giving ``spec.target_censoring`` censored.

    Bisection on ``log c`` over one fixed set of ``n_draws`` synthetic
    records; a record is censored iff ``log c < log T - log U``.
    """
    target = spec.target_censoring
    if not 0.0 < target <= 0.9:
        raise ValidationError("target_censoring must lie in (0, 0.9]")
    _, _, _, log_T, log_U = _draw_truth(spec, n_draws, (_CALIBRATION,))
    thresholds = log_T - log_U
    hi = math.log(C_MAX)
    if _censoring_rate(thresholds, hi) > target + tol:
        raise CalibrationError(
            f"censoring rate {_censoring_rate(thresholds, hi):.4f} at c = {C_MAX:g} still exceeds "
            f"target {target}"
        )
    lo = float(thresholds.min()) - 1.0
    mid = hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        rate = _censoring_rate(thresholds, mid)
        if abs(rate - target) <= 0.1 * tol or hi - lo < 1e-12:
            break
        if rate > target:
            lo = mid
        else:
            hi = mid
    rate = _censoring_rate(thresholds, mid)
    if abs(rate - target) > tol:
        raise CalibrationError(f"bisection ended at censoring rate {rate:.4f}, target {target}")
    c = math.exp(mid)
    if c == 0.0:
        raise CalibrationError(f"censoring bound exp({mid:.1f}) underflows")
    return c


def calibrated(spec: CaseSpec) -> CaseSpec:
    if spec.censoring_constant is not None:
        return spec
    return replace(spec, censoring_constant=calibrate_censoring(spec))


@dataclass(eq=False)
class MetricsReport:
    """Summary of a replicated study; per-replicate estimates are kept too."""

    spec: CaseSpec
    ci_level: float
    bias: np.ndarray
    mse: np.ndarray
    mc_sd: np.ndarray
    mean_se: np.ndarray
    coverage_probability: np.ndarray
    average_width: np.ndarray
    empirical_censoring_rate: float
    convergence_rate: float
    n_converged: int
    n_with_ci: int
    failures: dict = field(default_factory=dict)
    estimates: np.ndarray | None = None
    std_errors: np.ndarray | None = None
    covered: np.ndarray | None = None
    options: FitOptions | None = None

    def to_dict(self, include_replicates: bool = True) -> dict:
        d = {
            "kind": "metrics",
            "spec": self.spec.to_dict(),
            "ci_level": self.ci_level,
            "bias": self.bias.tolist(),
            "mse": self.mse.tolist(),
            "mc_sd": self.mc_sd.tolist(),
            "mean_se": self.mean_se.tolist(),
            "coverage_probability": self.coverage_probability.tolist(),
            "average_width": self.average_width.tolist(),
            "empirical_censoring_rate": self.empirical_censoring_rate,
            "convergence_rate": self.convergence_rate,
            "n_converged": self.n_converged,
            "n_with_ci": self.n_with_ci,
            "failures": dict(self.failures),
        }
        if include_replicates and self.estimates is not None:
            d["estimates"] = self.estimates.tolist()
            d["std_errors"] = self.std_errors.tolist()
        return d


def _replicate(spec: CaseSpec, index: int, options: FitOptions) -> dict:
    out = {"index": index, "beta": None, "se": None, "ci": None, "censored": math.nan, "error": None}
    try:
        sim = generate_case(spec, index)
    except IVTransError as exc:
        out["error"] = type(exc).__name__
        return out
    out["censored"] = 1.0 - float(sim.dataset.status.mean())
    try:
        res = fit(sim.dataset, spec.family, replace(options, variance="none"))
    except IVTransError as exc:
        out["error"] = type(exc).__name__
        return out
    out["beta"] = res.beta_hat
    if options.variance == "none":
        return out
    try:
        res = attach_variance(replace(res, options=options))
    except IVTransError as exc:
        out["variance_error"] = type(exc).__name__
        return out
    out["se"] = res.std_errors
    out["ci"] = res.conf_intervals
    return out


def _run_chunk(args):
    spec, indices, options = args
    return [_replicate(spec, i, options) for i in indices]


def _collect(spec: CaseSpec, options: FitOptions, workers: int) -> list[dict]:
    indices = list(range(spec.reps))
    if workers <= 1:
        return _run_chunk((spec, indices, options))
    size = max(1, math.ceil(len(indices) / (4 * workers)))
    chunks = [(spec, indices[i:i + size], options) for i in range(0, len(indices), size)]
    rows: list[dict] = []
    with cf.ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_run_chunk, chunks):
            rows.extend(part)
    rows.sort(key=lambda r: r["index"])
    return rows


def summarize(spec: CaseSpec, rows: list[dict], ci_level: float) -> MetricsReport:
    p = spec.p
    truth = np.asarray(spec.beta)
    est = np.full((spec.reps, p), np.nan)
    se = np.full((spec.reps, p), np.nan)
    lo = np.full((spec.reps, p), np.nan)
    hi = np.full((spec.reps, p), np.nan)
    failures: dict[str, int] = {}
    for row in rows:
        i = row["index"]
        if row["beta"] is not None and row["error"] is None:
            est[i] = row["beta"]
        if row["ci"] is not None:
            se[i] = row["se"]
            lo[i], hi[i] = row["ci"][:, 0], row["ci"][:, 1]
        for key in ("error", "variance_error"):
            if row.get(key) is not None:
                failures[row[key]] = failures.get(row[key], 0) + 1
    ok = np.all(np.isfinite(est), axis=1)
    with_ci = np.all(np.isfinite(lo), axis=1)
    n_ok = int(ok.sum())
    err = est[ok] - truth
    covered = (lo <= truth) & (truth <= hi)
    nan_p = np.full(p, np.nan)
    censored = np.array([row["censored"] for row in rows])
    return MetricsReport(
        spec=spec,
        ci_level=ci_level,
        bias=err.mean(axis=0) if n_ok else nan_p,
        mse=(err ** 2).mean(axis=0) if n_ok else nan_p,
        mc_sd=est[ok].std(axis=0, ddof=1) if n_ok > 1 else nan_p,
        mean_se=se[with_ci].mean(axis=0) if with_ci.any() else nan_p,
        coverage_probability=covered[with_ci].mean(axis=0) if with_ci.any() else nan_p,
        average_width=(hi - lo)[with_ci].mean(axis=0) if with_ci.any() else nan_p,
        empirical_censoring_rate=float(np.nanmean(censored)),
        convergence_rate=n_ok / spec.reps,
        n_converged=n_ok,
        n_with_ci=int(with_ci.sum()),
        failures=failures,
        estimates=est,
        std_errors=se,
        covered=covered,
    )


def run_study(
    spec: CaseSpec,
    *,
    ci_level: float = 0.95,
    workers: int = 1,
    options: FitOptions | None = None,
    min_convergence_rate: float = 0.95,
) -> MetricsReport:
    """Generate, fit and summarise ``spec.reps`` replicates.

    Non-converged replicates are left out of every moment and counted in
    ``failures``; a convergence rate below ``min_convergence_rate`` raises
    :class:`StudyQualityError` with the report attached.
    """
    spec = calibrated(spec)
    options = replace(options or FitOptions(), ci_level=ci_level)
    rows = _collect(spec, options, workers)
    report = summarize(spec, rows, ci_level)
    report.options = options
    if report.convergence_rate < min_convergence_rate:
        raise StudyQualityError(
            f"only {report.n_converged} of {spec.reps} replicates converged "
            f"(failures: {report.failures})",
            report,
        )
    return report


def coverage_study(spec: CaseSpec, *, ci_level: float = 0.95, workers: int = 1,
                   options: FitOptions | None = None) -> MetricsReport:
    """As :func:`run_study`, with plug-in intervals required for every fit."""
    options = replace(options or FitOptions(), variance="plugin")
    return run_study(spec, ci_level=ci_level, workers=workers, options=options)
