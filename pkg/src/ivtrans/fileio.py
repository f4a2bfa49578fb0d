"""CSV ingestion and JSON reports.

Numbers are parsed with a fixed grammar (decimal point, optional exponent)
rather than anything locale-aware. Reports are JSON; floats are written with
``repr`` precision so they read back bit-exactly.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .data import SurvivalDataset
from .errors import (
    AllCensoredError,
    InvalidStatusError,
    MissingColumnError,
    MissingValueError,
    NonNumericError,
    NonPositiveTimeError,
    ReportIOError,
    ValidationError,
)
from .estimate import FitOptions, FitResult
from .simulate import CaseSpec, MetricsReport

_NUMBER = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
REPORT_VERSION = 1


@dataclass(frozen=True)
class ColumnMapping:
    time_col: str
    status_col: str
    z_cols: tuple[str, ...]
    w_cols: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "z_cols", tuple(self.z_cols))
        object.__setattr__(self, "w_cols", tuple(self.w_cols))
        if not self.z_cols:
            raise ValidationError("at least one Z column is required")
        if len(self.w_cols) < len(self.z_cols):
            raise ValidationError(
                f"q >= p required: {len(self.w_cols)} instrument columns for {len(self.z_cols)} surrogates"
            )
        roles = {"time": [self.time_col], "status": [self.status_col],
                 "z": list(self.z_cols), "w": list(self.w_cols)}
        seen: dict[str, str] = {}
        for role, cols in roles.items():
            for c in cols:
                if c in seen:
                    raise ValidationError(f"column {c!r} mapped twice ({seen[c]} and {role})")
                seen[c] = role

    @property
    def columns(self) -> tuple[str, ...]:
        return (self.time_col, self.status_col, *self.z_cols, *self.w_cols)


def _number(text: str, row: int, col: str) -> float:
    s = text.strip()
    if not s:
        raise MissingValueError(f"row {row}: missing value in column {col!r}", row, col)
    if not _NUMBER.fullmatch(s):
        raise NonNumericError(f"row {row}: non-numeric value {text!r} in column {col!r}", row, col)
    return float(s)


def read_dataset(path, mapping: ColumnMapping, delimiter: str = ",") -> SurvivalDataset:
    """Load a delimited file with a header row.

    Row numbers in errors count data rows from 1 (the header is row 0).
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ReportIOError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumnError(f"{path} is empty", 0) from None
        missing = [c for c in mapping.columns if c not in header]
        if missing:
            raise MissingColumnError(f"column(s) {missing} not found in header", 0, missing[0])
        pos = {c: header.index(c) for c in mapping.columns}
        times, status, Z, W = [], [], [], []
        for row, cells in enumerate(reader, start=1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if len(cells) < len(header):
                cells = cells + [""] * (len(header) - len(cells))
            t = _number(cells[pos[mapping.time_col]], row, mapping.time_col)
            if not t > 0 or not np.isfinite(t):
                raise NonPositiveTimeError(f"row {row}: time {t!r} must be positive and finite", row,
                                           mapping.time_col)
            d = _number(cells[pos[mapping.status_col]], row, mapping.status_col)
            if d not in (0.0, 1.0):
                raise InvalidStatusError(f"row {row}: status {cells[pos[mapping.status_col]]!r} not in {{0, 1}}",
                                         row, mapping.status_col)
            times.append(t)
            status.append(int(d))
            Z.append([_number(cells[pos[c]], row, c) for c in mapping.z_cols])
            W.append([_number(cells[pos[c]], row, c) for c in mapping.w_cols])
    if not times:
        raise MissingValueError(f"{path} has no data rows", None)
    if not any(status):
        raise AllCensoredError("every record is censored; at least one event is required", None,
                               mapping.status_col)
    return SurvivalDataset(np.array(times), np.array(status), np.array(Z), np.array(W),
                           z_names=mapping.z_cols, w_names=mapping.w_cols)


@dataclass(eq=False)
class FitSummary:
    """Serializable view of a :class:`FitResult`."""

    beta_hat: np.ndarray
    std_errors: np.ndarray | None
    conf_intervals: np.ndarray | None
    covariance: np.ndarray | None
    transform_pairs: list
    converged: bool
    iterations: int
    final_score_norm: float
    family_r: float
    naive: bool
    names: tuple[str, ...]
    variance_note: str
    options: dict
    components: dict | None = None

    @classmethod
    def from_result(cls, result: FitResult, include_components: bool = False) -> "FitSummary":
        comps = None
        if include_components and result.components is not None:
            comps = result.components.as_dict()
        return cls(
            beta_hat=result.beta_hat, std_errors=result.std_errors,
            conf_intervals=result.conf_intervals, covariance=result.covariance,
            transform_pairs=result.transform.pairs(), converged=result.converged,
            iterations=result.iterations, final_score_norm=result.final_score_norm,
            family_r=result.family.r, naive=result.naive, names=result.dataset.z_names,
            variance_note=result.variance_note, options=asdict(result.options), components=comps,
        )

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "beta_hat": arr(self.beta_hat), "std_errors": arr(self.std_errors),
            "conf_intervals": arr(self.conf_intervals), "covariance": arr(self.covariance),
            "transform": [list(p) for p in self.transform_pairs], "converged": self.converged,
            "iterations": self.iterations, "final_score_norm": self.final_score_norm,
            "family_r": self.family_r, "naive": self.naive, "names": list(self.names),
            "variance_note": self.variance_note, "options": self.options,
            "components": self.components,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitSummary":
        def arr(a):
            return None if a is None else np.asarray(a, dtype=float)

        return cls(
            beta_hat=arr(d["beta_hat"]), std_errors=arr(d["std_errors"]),
            conf_intervals=arr(d["conf_intervals"]), covariance=arr(d["covariance"]),
            transform_pairs=[tuple(p) for p in d["transform"]], converged=d["converged"],
            iterations=d["iterations"], final_score_norm=d["final_score_norm"],
            family_r=d["family_r"], naive=d["naive"], names=tuple(d["names"]),
            variance_note=d["variance_note"], options=d["options"], components=d.get("components"),
        )


@dataclass(eq=False)
class Report:
    kind: str
    config: dict = field(default_factory=dict)
    fits: dict[str, FitSummary] = field(default_factory=dict)
    metrics: MetricsReport | None = None


def metrics_to_dict(report: MetricsReport) -> dict:
    d = report.to_dict()
    d["fit_options"] = None if report.options is None else asdict(report.options)
    return d


def metrics_from_dict(d: dict) -> MetricsReport:
    def arr(key):
        return np.asarray(d[key], dtype=float)

    opts = d.get("fit_options")
    return MetricsReport(
        spec=CaseSpec.from_dict(d["spec"]), ci_level=d["ci_level"], bias=arr("bias"), mse=arr("mse"),
        mc_sd=arr("mc_sd"), mean_se=arr("mean_se"), coverage_probability=arr("coverage_probability"),
        average_width=arr("average_width"), empirical_censoring_rate=d["empirical_censoring_rate"],
        convergence_rate=d["convergence_rate"], n_converged=d["n_converged"], n_with_ci=d["n_with_ci"],
        failures=dict(d["failures"]),
        estimates=arr("estimates") if "estimates" in d else None,
        std_errors=arr("std_errors") if "std_errors" in d else None,
        options=None if opts is None else FitOptions(**opts),
    )


def write_report(result, path, *, config: Mapping | None = None, include_components: bool = False) -> None:
    """Write a fit, a labelled set of fits, or a study summary as JSON.

    ``result`` may be a :class:`FitResult`, a mapping of label to
    :class:`FitResult` or a :class:`MetricsReport`. ``config`` is echoed
    verbatim so the run can be reconstructed.
    """
    doc: dict = {"version": REPORT_VERSION, "config": dict(config or {})}
    if isinstance(result, MetricsReport):
        doc["kind"] = "metrics"
        doc["metrics"] = metrics_to_dict(result)
    else:
        fits = result if isinstance(result, Mapping) else {"naive" if result.naive else "proposed": result}
        doc["kind"] = "fit"
        doc["fits"] = {
            label: FitSummary.from_result(r, include_components).to_dict() for label, r in fits.items()
        }
    try:
        Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ReportIOError(f"cannot write report to {path}: {exc}") from exc


def read_report(path) -> Report:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ReportIOError(f"cannot read report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ReportIOError(f"{path} is not a valid report: {exc}") from exc
    kind = doc.get("kind")
    if kind == "metrics":
        return Report(kind, doc.get("config", {}), metrics=metrics_from_dict(doc["metrics"]))
    if kind == "fit":
        fits = {label: FitSummary.from_dict(d) for label, d in doc["fits"].items()}
        return Report(kind, doc.get("config", {}), fits=fits)
    raise ReportIOError(f"{path}: unknown report kind {kind!r}")


def comparison_table(fits: Mapping[str, FitSummary | FitResult], title: str = "") -> str:
    """Methods as rows and, per covariate, an Estimate and SE column."""
    summaries = {k: v if isinstance(v, FitSummary) else FitSummary.from_result(v) for k, v in fits.items()}
    names = next(iter(summaries.values())).names
    label_w = max(8, *(len(k) for k in summaries))
    cell = 10
    block = 2 * cell + 1
    lines = []
    if title:
        lines.append(title)
    lines.append(" " * label_w + " | " + " | ".join(f"{nm:^{block}}" for nm in names))
    lines.append(f"{'Method':<{label_w}} | " + " | ".join(f"{'Estimate':>{cell}} {'SE':>{cell}}" for _ in names))
    lines.append("-" * len(lines[-1]))
    for label, s in summaries.items():
        parts = []
        for j in range(len(names)):
            se = "n/a" if s.std_errors is None else f"{s.std_errors[j]:.4f}"
            parts.append(f"{s.beta_hat[j]:>{cell}.4f} {se:>{cell}}")
        flag = "" if s.converged else "  (not converged)"
        lines.append(f"{label.capitalize():<{label_w}} | " + " | ".join(parts) + flag)
    return "\n".join(lines)
