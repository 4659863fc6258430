"""Plug-in asymptotic variance estimates and normal-theory intervals.

Both estimators report the variance on the subsample-size scale: the
stored matrix estimates n * Var(estimator), and dividing by the realized
size gives the coefficient covariance.  The conditional-likelihood
variance is built from the outer products of the per-row corrected
scores of the selected rows; the weighted variance is the usual
sandwich with inverse-probability weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as spst

from .data import Dataset
from .errors import SingularVariance
from .estimators import sampled_conditional_score_rows
from .families import Family
from .fitting import FitResult
from .sampling import PilotEstimate, SubsampleDraw, SubsamplePlan

__all__ = [
    "VarianceEstimate",
    "estimate_sigma_mscle",
    "estimate_v_weighted",
    "confidence_intervals",
]

SYMMETRY_TOL = 1e-10
EIGEN_TOL = -1e-8


@dataclass(frozen=True)
class VarianceEstimate:
    """n-scaled asymptotic covariance plus the divisor to undo the scaling."""

    scaled_covariance: np.ndarray
    scale: float
    kind: str

    @property
    def covariance(self) -> np.ndarray:
        return self.scaled_covariance / self.scale


def _validated(matrix: np.ndarray, scale: float, kind: str) -> VarianceEstimate:
    if not np.all(np.isfinite(matrix)):
        raise SingularVariance(f"{kind} variance estimate is not finite")
    asym = np.max(np.abs(matrix - matrix.T)) / max(1.0, np.max(np.abs(matrix)))
    if asym > SYMMETRY_TOL:
        raise SingularVariance(f"{kind} variance estimate is asymmetric ({asym:.2e})")
    sym = 0.5 * (matrix + matrix.T)
    eigs = np.linalg.eigvalsh(sym)
    if eigs.min() < EIGEN_TOL * max(1.0, eigs.max()):
        raise SingularVariance(
            f"{kind} variance estimate is not positive semidefinite "
            f"(min eigenvalue {eigs.min():.3e})"
        )
    return VarianceEstimate(sym, scale, kind)


def estimate_sigma_mscle(
    model: Family,
    dataset: Dataset,
    plan: SubsamplePlan,
    draw: SubsampleDraw,
    pilot: PilotEstimate,
    beta_hat: np.ndarray,
) -> VarianceEstimate:
    """Variance plug-in for the conditional-likelihood estimator.

    Averaging the outer products of the per-row corrected scores over the
    selected rows estimates the information of the sampled conditional
    likelihood; its inverse is the n-scaled covariance.  For a
    non-informative plan the corrected score is the plain score, which
    recovers the classical information estimate.
    """
    sel = draw.indices
    if sel.shape[0] == 0:
        raise SingularVariance("empty draw; variance undefined")
    Xs, ys = dataset.x[sel], dataset.y[sel]
    if plan.is_informative:
        rows = sampled_conditional_score_rows(model, Xs, ys, beta_hat, pilot.beta_plt)
    else:
        rows = model.score_rows(Xs, ys, beta_hat)
    n_hat = float(sel.shape[0])
    sigma = rows.T @ rows / n_hat
    try:
        scaled_cov = np.linalg.inv(sigma)
    except np.linalg.LinAlgError:
        raise SingularVariance("conditional-score information is singular") from None
    return _validated(scaled_cov, n_hat, "mscle")


def estimate_v_weighted(
    model: Family,
    dataset: Dataset,
    plan: SubsamplePlan,
    draw: SubsampleDraw,
    beta_hat: np.ndarray,
) -> VarianceEstimate:
    """Sandwich variance plug-in for the weighted estimator.

    Bread: information with weights (n/N)/pi; meat: score outer products
    with squared weights.  With a uniform plan this collapses to the
    classical MLE sandwich on the subsample.
    """
    sel = draw.indices
    if sel.shape[0] == 0:
        raise SingularVariance("empty draw; variance undefined")
    Xs, ys = dataset.x[sel], dataset.y[sel]
    pi = plan.probabilities[sel]
    if np.any(pi <= 0.0):
        raise SingularVariance("selected row has zero sampling probability")
    ratio = plan.target_avg_size / dataset.n_rows
    w = ratio / pi
    n_hat = float(sel.shape[0])

    bread = model.information(Xs, beta_hat, weights=w) / n_hat
    score_rows = model.score_rows(Xs, ys, beta_hat)
    weighted_rows = score_rows * w[:, None]
    meat = weighted_rows.T @ weighted_rows / n_hat
    try:
        half = np.linalg.solve(bread, meat)
        sandwich = np.linalg.solve(bread, half.T).T
    except np.linalg.LinAlgError:
        raise SingularVariance("weighted information matrix is singular") from None
    return _validated(sandwich, n_hat, "weighted")


def confidence_intervals(
    fit: FitResult, variance: VarianceEstimate, level: float
) -> np.ndarray:
    """Per-coefficient normal intervals at the given coverage level.

    Returns an array of shape (p, 2) with lower and upper bounds
    ``beta_j -+ z * sqrt(cov_jj)``.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must lie strictly between 0 and 1")
    z = spst.norm.ppf(0.5 * (1.0 + level))
    half = z * np.sqrt(np.diag(variance.covariance))
    beta = fit.coefficients
    return np.column_stack([beta - half, beta + half])
