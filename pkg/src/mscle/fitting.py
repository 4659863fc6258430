"""Fisher-scoring engine and the full-data maximum likelihood fit."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .data import Dataset
from .errors import SingularInformation
from .families import Family

__all__ = ["FitResult", "fisher_scoring", "fisher_scoring_mle"]

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
MAX_HALVINGS = 20
DIVERGENCE_BOUND = 1e10


@dataclass(frozen=True)
class FitResult:
    """Outcome of any scoring-based fit.

    ``final_gradient_norm`` is the per-observation norm ||g|| / n_obs, the
    quantity the convergence test bounds by the tolerance.
    """

    coefficients: np.ndarray
    covariance: np.ndarray | None
    iterations: int
    converged: bool
    final_gradient_norm: float

    def with_covariance(self, covariance: np.ndarray) -> "FitResult":
        return replace(self, covariance=covariance)

    def to_dict(self) -> dict:
        return {
            "coefficients": [float(v) for v in self.coefficients],
            "covariance": None
            if self.covariance is None
            else [[float(v) for v in row] for row in self.covariance],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "final_gradient_norm": float(self.final_gradient_norm),
        }


def fisher_scoring(
    objective: Callable[[np.ndarray], float],
    score_information: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    init: np.ndarray,
    n_obs: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FitResult:
    """Maximize ``objective`` by Newton steps on the expected information.

    Convergence requires both the relative step norm and the
    per-observation gradient norm to drop below ``tol``.  When a full step
    lowers the objective it is halved (up to 20 times) before giving up.
    A singular information matrix raises :class:`SingularInformation`;
    plain non-convergence is reported via ``converged=False``.
    """
    beta = np.array(init, dtype=float).copy()
    value = objective(beta)
    last_rel_step = np.inf
    grad_norm = np.inf
    iterations = 0

    for iterations in range(1, max_iter + 1):
        g, info = score_information(beta)
        grad_norm = float(np.linalg.norm(g)) / max(float(n_obs), 1.0)
        if last_rel_step < tol and grad_norm < tol:
            return FitResult(beta, None, iterations - 1, True, grad_norm)
        try:
            direction = np.linalg.solve(info, g)
        except np.linalg.LinAlgError:
            raise SingularInformation("information matrix is singular") from None
        if not np.all(np.isfinite(direction)):
            raise SingularInformation("information matrix is numerically singular")

        step = 1.0
        accepted = False
        slack = 1e-10 * (1.0 + abs(value)) if np.isfinite(value) else 0.0
        for _ in range(MAX_HALVINGS + 1):
            candidate = beta + step * direction
            cand_value = objective(candidate)
            if np.isfinite(cand_value) and cand_value >= value - slack:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return FitResult(beta, None, iterations, False, grad_norm)

        last_rel_step = float(
            np.linalg.norm(candidate - beta) / (1.0 + np.linalg.norm(beta))
        )
        beta, value = candidate, cand_value
        if np.linalg.norm(beta) > DIVERGENCE_BOUND:
            return FitResult(beta, None, iterations, False, grad_norm)

    g, _ = score_information(beta)
    grad_norm = float(np.linalg.norm(g)) / max(float(n_obs), 1.0)
    converged = last_rel_step < tol and grad_norm < tol
    return FitResult(beta, None, max_iter, converged, grad_norm)


def fisher_scoring_mle(
    model: Family,
    dataset: Dataset,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FitResult:
    """Full-data MLE via Fisher scoring, starting from ``init`` (default 0)."""
    dataset.validate_for(model)
    X, y = dataset.x, dataset.y
    p = model.n_params(dataset.n_features)
    beta0 = np.zeros(p) if init is None else model.validate_beta(init, dataset.n_features)

    def objective(beta):
        return model.loglik(X, y, beta)

    def score_information(beta):
        return model.score_total(X, y, beta), model.information(X, beta)

    return fisher_scoring(
        objective, score_information, beta0, n_obs=dataset.n_rows, tol=tol, max_iter=max_iter
    )
