"""Subsample estimators: weighted, naive, and bias-corrected conditional fits.

Three estimators operate on one realized draw:

* ``weighted_fit`` maximizes the inverse-probability-weighted log
  likelihood; consistent but noisy when tiny-probability rows land in the
  sample (weights are deliberately not clamped so that pathology stays
  observable).
* ``naive_fit`` maximizes the unweighted log likelihood of the selected
  rows; biased under informative sampling.
* ``mscle_fit_*`` maximize the conditional likelihood of the selected
  responses given their covariates and inclusion, which corrects the
  selection bias through closed-form conditional moments and is the
  efficient choice.

The correction always follows the realized sampling rule: plans whose
probabilities do not depend on the response (the uniform plan) need no
correction, so the conditional fit reduces to the naive one.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy import special as sps

from .data import Dataset
from .errors import DegenerateRow, MscleError
from .families import (
    BinaryLink,
    Family,
    Logistic,
    MultiLogistic,
    Poisson,
    _Univariate,
    softmax_rows,
)
from .fitting import DEFAULT_MAX_ITER, DEFAULT_TOL, FitResult, fisher_scoring, fisher_scoring_mle
from .moments import binary_kappas, multiclass_adjustment, poisson_kappas
from .sampling import (
    GRADIENT_NORM,
    MULTICLASS_LOPT,
    UNIFIED,
    PilotEstimate,
    SubsampleDraw,
    SubsamplePlan,
)

__all__ = [
    "weighted_fit",
    "naive_fit",
    "mscle_fit",
    "mscle_fit_binary",
    "mscle_fit_multiclass",
    "mscle_fit_poisson",
    "mscle_fit_logistic_shift",
    "sampled_conditional_loglik",
    "sampled_conditional_score_rows",
    "mscle_full_hessian",
]

KAPPA_FLOOR = 1e-300


def _selected(dataset: Dataset, draw: SubsampleDraw):
    if draw.realized_size == 0:
        raise MscleError("empty subsample draw; nothing to fit")
    sel = draw.indices
    return sel, dataset.x[sel], dataset.y[sel]


def _check_plan_family(plan: SubsamplePlan, allowed: tuple[str, ...]):
    if plan.method not in allowed:
        raise ValueError(
            f"plan built with method {plan.method!r}; this fit supports {allowed}"
        )


def weighted_fit(
    model: Family,
    dataset: Dataset,
    plan: SubsamplePlan,
    draw: SubsampleDraw,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FitResult:
    """Inverse-probability-weighted fit on the selected rows."""
    sel, Xs, ys = _selected(dataset, draw)
    pi = plan.probabilities[sel]
    if np.any(pi <= 0.0):
        raise MscleError("selected row has zero sampling probability")
    w = 1.0 / pi
    p = model.n_params(dataset.n_features)
    beta0 = np.zeros(p) if init is None else model.validate_beta(init, dataset.n_features)

    def objective(beta):
        return model.loglik(Xs, ys, beta, weights=w)

    def score_information(beta):
        return (
            model.score_total(Xs, ys, beta, weights=w),
            model.information(Xs, beta, weights=w),
        )

    return fisher_scoring(
        objective, score_information, beta0, n_obs=float(w.sum()), tol=tol, max_iter=max_iter
    )


def naive_fit(
    model: Family,
    dataset: Dataset,
    draw: SubsampleDraw,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FitResult:
    """Unweighted complete-case MLE on the selected rows."""
    sel, _, _ = _selected(dataset, draw)
    return fisher_scoring_mle(model, dataset.subset(sel), init=init, tol=tol, max_iter=max_iter)


def mscle_fit_binary(
    model: Family,
    dataset: Dataset,
    plan: SubsamplePlan,
    draw: SubsampleDraw,
    pilot: PilotEstimate,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    use_full_hessian: bool = False,
) -> FitResult:
    """Conditional-likelihood fit for a 0/1 response.

    ``use_full_hessian`` switches the Newton matrix from the expected-
    information form to the full Hessian including the curvature of the
    success-odds transform; the two coincide for the canonical logit.
    """
    if not isinstance(model, (Logistic, BinaryLink)):
        raise ValueError("mscle_fit_binary requires a Logistic or BinaryLink model")
    if not plan.is_informative:
        return naive_fit(model, dataset, draw, init=pilot.beta_plt if init is None else init,
                         tol=tol, max_iter=max_iter)
    _check_plan_family(plan, (UNIFIED, GRADIENT_NORM))

    sel, Xs, ys = _selected(dataset, draw)
    p_tilde = model.mean_from_eta(Xs @ pilot.beta_plt)
    beta0 = pilot.beta_plt if init is None else model.validate_beta(init, dataset.n_features)

    def objective(beta):
        prob = model.mean_from_eta(Xs @ beta)
        k0 = prob + p_tilde - 2.0 * prob * p_tilde
        if np.any(k0 <= 0.0):
            return -np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            rows = sps.xlogy(ys, prob) + sps.xlogy(1.0 - ys, 1.0 - prob) - np.log(k0)
        total = rows.sum()
        return float(total) if np.isfinite(total) else -np.inf

    def score_information(beta):
        eta = Xs @ beta
        prob = model.mean_from_eta(eta)
        kap = binary_kappas(prob, p_tilde)
        if np.any(kap.kappa0 < KAPPA_FLOOR):
            bad = int(np.argmin(kap.kappa0))
            raise DegenerateRow(int(sel[bad]))
        bp = model.b_prime(eta)
        resid = (ys - kap.conditional_mean) * bp
        grad = Xs.T @ resid
        if use_full_hessian:
            info = -mscle_full_hessian(model, Xs, ys, beta, pilot.beta_plt)
        else:
            w = kap.conditional_second_moment_gap * bp**2
            info = (Xs * w[:, None]).T @ Xs
        return grad, info

    return fisher_scoring(
        objective, score_information, beta0, n_obs=float(sel.shape[0]), tol=tol, max_iter=max_iter
    )


def mscle_fit_multiclass(
    dataset: Dataset,
    plan: SubsamplePlan,
    draw: SubsampleDraw,
    pilot: PilotEstimate,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FitResult:
    """Conditional-likelihood fit for multinomial data.

    Once the per-row log offsets are computed from the pilot, this is a
    multinomial logistic fit with offset linear predictors, solved over
    the free (K-1)*d block.
    """
    model = pilot.model
    if not isinstance(model, MultiLogistic):
        raise ValueError("mscle_fit_multiclass requires a MultiLogistic pilot")
    if not plan.is_informative:
        return naive_fit(model, dataset, draw, init=pilot.beta_plt if init is None else init,
                         tol=tol, max_iter=max_iter)
    _check_plan_family(plan, (MULTICLASS_LOPT,))

    sel, Xs, ys = _selected(dataset, draw)
    p_tilde = model.mean(Xs, pilot.beta_plt)
    offsets = multiclass_adjustment(p_tilde).g
    Y = model.one_hot(ys)
    beta0 = pilot.beta_plt if init is None else model.validate_beta(init, dataset.n_features)

    def objective(beta):
        eta = model.linear_predictors(Xs, beta)
        lse = sps.logsumexp(eta + offsets, axis=1)
        total = ((Y * eta).sum(axis=1) - lse).sum()
        return float(total) if np.isfinite(total) else -np.inf

    def score_information(beta):
        eta = model.linear_predictors(Xs, beta)
        p_g = softmax_rows(eta + offsets)[:, :-1]
        resid = Y[:, :-1] - p_g
        grad = np.einsum("nk,nd->kd", resid, Xs).ravel()
        info = MultiLogistic.information_from_probs(Xs, p_g)
        return grad, info

    return fisher_scoring(
        objective, score_information, beta0, n_obs=float(sel.shape[0]), tol=tol, max_iter=max_iter
    )


def mscle_fit_poisson(
    dataset: Dataset,
    plan: SubsamplePlan,
    draw: SubsampleDraw,
    pilot: PilotEstimate,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FitResult:
    """Conditional-likelihood fit for count data.

    Raises :class:`DegenerateRow` if a selected row's correction
    denominator underflows (below 1e-300), which signals that the pilot
    mean is irreconcilable with the working mean at that row.
    """
    model = pilot.model
    if not isinstance(model, Poisson):
        raise ValueError("mscle_fit_poisson requires a Poisson pilot")
    if not plan.is_informative:
        return naive_fit(model, dataset, draw, init=pilot.beta_plt if init is None else init,
                         tol=tol, max_iter=max_iter)
    _check_plan_family(plan, (UNIFIED, GRADIENT_NORM))

    sel, Xs, ys = _selected(dataset, draw)
    mu_tilde = model.mean_from_eta(Xs @ pilot.beta_plt)
    beta0 = pilot.beta_plt if init is None else model.validate_beta(init, dataset.n_features)

    def objective(beta):
        eta = Xs @ beta
        with np.errstate(over="ignore"):
            mu = np.exp(eta)
        if not np.all(np.isfinite(mu)):
            return -np.inf
        kap = poisson_kappas(mu, mu_tilde)
        if np.any(kap.kappa0 <= 0.0) or not np.all(np.isfinite(kap.kappa0)):
            return -np.inf
        total = (ys * eta - mu - np.log(kap.kappa0)).sum()
        return float(total) if np.isfinite(total) else -np.inf

    def score_information(beta):
        eta = Xs @ beta
        mu = np.exp(eta)
        kap = poisson_kappas(mu, mu_tilde)
        if np.any(kap.kappa0 < KAPPA_FLOOR):
            bad = int(np.argmin(kap.kappa0))
            raise DegenerateRow(int(sel[bad]))
        resid = ys - kap.conditional_mean
        grad = Xs.T @ resid
        w = kap.conditional_second_moment_gap
        info = (Xs * w[:, None]).T @ Xs
        return grad, info

    return fisher_scoring(
        objective, score_information, beta0, n_obs=float(sel.shape[0]), tol=tol, max_iter=max_iter
    )


def mscle_fit(
    model: Family,
    dataset: Dataset,
    plan: SubsamplePlan,
    draw: SubsampleDraw,
    pilot: PilotEstimate,
    init: np.ndarray | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FitResult:
    """Family dispatch for the conditional-likelihood estimator."""
    if isinstance(model, MultiLogistic):
        return mscle_fit_multiclass(dataset, plan, draw, pilot, init, tol, max_iter)
    if isinstance(model, Poisson):
        return mscle_fit_poisson(dataset, plan, draw, pilot, init, tol, max_iter)
    return mscle_fit_binary(model, dataset, plan, draw, pilot, init, tol, max_iter)


def mscle_fit_logistic_shift(
    dataset: Dataset,
    draw: SubsampleDraw,
    pilot: PilotEstimate,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FitResult:
    """Logistic special case via the shift construction.

    Fits a plain logistic MLE to the selected rows and adds the pilot
    coefficients back; algebraically the same estimator as the iterative
    conditional fit for the logit link.
    """
    if not isinstance(pilot.model, Logistic):
        raise ValueError("shift construction applies to the Logistic family")
    sel = draw.indices
    if sel.shape[0] == 0:
        raise MscleError("empty subsample draw; nothing to fit")
    fit = fisher_scoring_mle(
        Logistic(), dataset.subset(sel), init=None, tol=tol, max_iter=max_iter
    )
    return replace(fit, coefficients=fit.coefficients + pilot.beta_plt)


# -- shared forms used by tests and the variance plug-ins -----------------


def sampled_conditional_loglik(
    model: Family, X: np.ndarray, y: np.ndarray, beta: np.ndarray, pilot_beta: np.ndarray
) -> float:
    """Conditional log likelihood of the rows given selection, up to
    terms that do not involve ``beta``."""
    if isinstance(model, MultiLogistic):
        offsets = multiclass_adjustment(model.mean(X, pilot_beta)).g
        eta = model.linear_predictors(X, beta)
        Y = model.one_hot(y)
        lse = sps.logsumexp(eta + offsets, axis=1)
        return float(((Y * eta).sum(axis=1) - lse).sum())
    if isinstance(model, Poisson):
        mu_tilde = model.mean_from_eta(X @ pilot_beta)
        eta = X @ beta
        mu = np.exp(eta)
        kap = poisson_kappas(mu, mu_tilde)
        return float((y * eta - mu - np.log(kap.kappa0)).sum())
    if isinstance(model, _Univariate):
        p_tilde = model.mean_from_eta(X @ pilot_beta)
        prob = model.mean_from_eta(X @ beta)
        k0 = prob + p_tilde - 2.0 * prob * p_tilde
        with np.errstate(divide="ignore", invalid="ignore"):
            rows = sps.xlogy(y, prob) + sps.xlogy(1.0 - y, 1.0 - prob) - np.log(k0)
        return float(rows.sum())
    raise ValueError(f"unsupported family {model!r}")


def sampled_conditional_score_rows(
    model: Family, X: np.ndarray, y: np.ndarray, beta: np.ndarray, pilot_beta: np.ndarray
) -> np.ndarray:
    """Per-row gradient of the conditional log likelihood (free block)."""
    if isinstance(model, MultiLogistic):
        p_tilde = model.mean(X, pilot_beta)
        offsets = multiclass_adjustment(p_tilde).g
        eta = model.linear_predictors(X, beta)
        p_g = softmax_rows(eta + offsets)[:, :-1]
        resid = model.one_hot(y)[:, :-1] - p_g
        n, d = X.shape
        return np.einsum("nk,nd->nkd", resid, X).reshape(n, -1)
    if isinstance(model, Poisson):
        mu_tilde = model.mean_from_eta(X @ pilot_beta)
        mu = np.exp(X @ beta)
        kap = poisson_kappas(mu, mu_tilde)
        return (y - kap.conditional_mean)[:, None] * X
    if isinstance(model, _Univariate):
        eta = X @ beta
        prob = model.mean_from_eta(eta)
        p_tilde = model.mean_from_eta(X @ pilot_beta)
        kap = binary_kappas(prob, p_tilde)
        resid = (y - kap.conditional_mean) * model.b_prime(eta)
        return resid[:, None] * X
    raise ValueError(f"unsupported family {model!r}")


def mscle_full_hessian(
    model: Family, X: np.ndarray, y: np.ndarray, beta: np.ndarray, pilot_beta: np.ndarray
) -> np.ndarray:
    """Full second derivative of the binary conditional log likelihood.

    Adds the curvature term driven by the second derivative of the
    success-odds transform; zero for canonical links, where this equals
    the negative expected information.
    """
    if not isinstance(model, (Logistic, BinaryLink)):
        raise ValueError("full Hessian diagnostic is defined for binary families")
    eta = X @ beta
    prob = model.mean_from_eta(eta)
    p_tilde = model.mean_from_eta(X @ pilot_beta)
    kap = binary_kappas(prob, p_tilde)
    bp = model.b_prime(eta)
    w_fisher = kap.conditional_second_moment_gap * bp**2
    hess = -(X * w_fisher[:, None]).T @ X
    if isinstance(model, BinaryLink):
        bpp = model.b_second(eta)
        w_curv = (y - kap.conditional_mean) * bpp
        hess = hess + (X * w_curv[:, None]).T @ X
    return hess
