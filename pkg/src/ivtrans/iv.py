"""First stage: least-squares regression of the surrogates on the instruments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .data import SurvivalDataset
from .errors import InsufficientDataError, ShapeError, SingularDesignError

RCOND_MIN = 1e-12


@dataclass(frozen=True, eq=False)
class IVRegressionFit:
    """Result of regressing Z on W.

    ``residual_cov`` is the full p x p residual covariance; ``sigma_eta_sq``
    is its diagonal. Both use the ``n - q`` divisor.
    """

    Q_hat: np.ndarray
    imputed_design: np.ndarray
    sigma_eta_sq: np.ndarray
    gram_inverse: np.ndarray
    residual_cov: np.ndarray
    rcond: float

    @property
    def q(self) -> int:
        return self.Q_hat.shape[0]

    @property
    def p(self) -> int:
        return self.Q_hat.shape[1]


def estimate_Q(dataset: SurvivalDataset) -> IVRegressionFit:
    W, Z = dataset.W, dataset.Z
    n, q = W.shape
    if n <= q:
        raise InsufficientDataError(f"need more records than instruments (n={n}, q={q})")
    Qr, R = np.linalg.qr(W)
    sv = np.linalg.svd(R, compute_uv=False)
    # rcond of W'W is the squared rcond of W
    rcond = float((sv[-1] / sv[0]) ** 2) if sv[0] > 0 else 0.0
    if not rcond >= RCOND_MIN:
        raise SingularDesignError(
            f"instrument Gram matrix W'W is singular or ill-conditioned "
            f"(reciprocal condition number {rcond:.3g} < {RCOND_MIN:g})",
            rcond,
        )
    Q_hat = solve_triangular(R, Qr.T @ Z)
    R_inv = solve_triangular(R, np.eye(q))
    gram_inverse = R_inv @ R_inv.T
    gram_inverse = 0.5 * (gram_inverse + gram_inverse.T)
    design = W @ Q_hat
    resid = Z - design
    residual_cov = resid.T @ resid / (n - q)
    return IVRegressionFit(
        Q_hat=Q_hat,
        imputed_design=design,
        sigma_eta_sq=np.diag(residual_cov).copy(),
        gram_inverse=gram_inverse,
        residual_cov=residual_cov,
        rcond=rcond,
    )


def impute_design(fit: IVRegressionFit, W_new) -> np.ndarray:
    W_new = np.asarray(W_new, dtype=float)
    if W_new.ndim == 1:
        W_new = W_new[:, None]
    if W_new.ndim != 2 or W_new.shape[1] != fit.q:
        raise ShapeError(f"W_new must have {fit.q} columns, got shape {W_new.shape}")
    return W_new @ fit.Q_hat
