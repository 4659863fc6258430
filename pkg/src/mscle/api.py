"""Scikit-learn style estimators wrapping the subsample pipeline.

Each estimator runs pilot fit -> sampling plan -> Bernoulli draw ->
subsample fit inside ``fit(X, y)`` and exposes the usual attributes
(``coef_``, ``intercept_``, ``predict`` / ``predict_proba``) plus the
intermediate artifacts (``pilot_``, ``plan_``, ``draw_``, ``result_``).
Parameters follow the get_params/set_params protocol so the estimators
compose with pipelines, grid search, and ``clone``.
"""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin

from .data import Dataset
from .errors import DataValidationError
from .families import CLOGLOG_LINK, PROBIT_LINK, BinaryLink, Logistic, MultiLogistic, Poisson
from .estimators import mscle_fit, naive_fit, weighted_fit
from .rng import substream
from .sampling import default_plan, draw_subsample, pilot_fit
from .variance import confidence_intervals, estimate_sigma_mscle, estimate_v_weighted

__all__ = [
    "SubsampledLogisticRegression",
    "SubsampledMultinomialRegression",
    "SubsampledPoissonRegression",
    "check_design_matrix",
    "check_response",
]

_SAMPLING_CHOICES = ("lopt", "lcc", "aopt", "gradnorm", "uniform")
_METHOD_CHOICES = ("mscle", "weighted", "naive", "uniform")


def check_design_matrix(X) -> np.ndarray:
    """Validate and convert a 2-D finite covariate matrix."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DataValidationError("X must be a 2-D array")
    if X.shape[0] < 1:
        raise DataValidationError("X must have at least one row")
    if not np.all(np.isfinite(X)):
        raise DataValidationError("X contains NaN or infinite entries")
    return X


def check_response(y, n_rows: int) -> np.ndarray:
    """Validate a finite response vector of the expected length."""
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != n_rows:
        raise DataValidationError(f"y has {y.shape[0]} rows, X has {n_rows}")
    if not np.all(np.isfinite(y)):
        raise DataValidationError("y contains NaN or infinite entries")
    return y


def _resolve_seed(random_state) -> int:
    if random_state is None:
        return int(np.random.SeedSequence().entropy % (2**63))
    if isinstance(random_state, numbers.Integral):
        return int(random_state)
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(2**63))
    raise ValueError("random_state must be None, an int, or a numpy Generator")


class _BaseSubsampledGLM(BaseEstimator):
    """Shared pipeline; subclasses define the family and the predictions."""

    def __init__(
        self,
        n=1000,
        pilot_size=400,
        sampling="lopt",
        method="mscle",
        fit_intercept=True,
        pilot_overlap=False,
        compute_variance=True,
        conf_level=0.95,
        tol=1e-8,
        max_iter=100,
        random_state=None,
    ):
        self.n = n
        self.pilot_size = pilot_size
        self.sampling = sampling
        self.method = method
        self.fit_intercept = fit_intercept
        self.pilot_overlap = pilot_overlap
        self.compute_variance = compute_variance
        self.conf_level = conf_level
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    # subclasses override
    def _make_family(self, y):
        raise NotImplementedError

    def _encode_response(self, y):
        return y

    def _design(self, X):
        X = check_design_matrix(X)
        if self.fit_intercept:
            X = np.hstack([np.ones((X.shape[0], 1)), X])
        return X

    def fit(self, X, y):
        if self.sampling not in _SAMPLING_CHOICES:
            raise ValueError(f"sampling must be one of {_SAMPLING_CHOICES}")
        if self.method not in _METHOD_CHOICES:
            raise ValueError(f"method must be one of {_METHOD_CHOICES}")
        X = check_design_matrix(X)
        y = check_response(y, X.shape[0])
        self.n_features_in_ = X.shape[1]
        y = self._encode_response(y)
        design = self._design(X)
        model = self._make_family(y)
        dataset = Dataset(design, y)
        dataset.validate_for(model)

        seed = _resolve_seed(self.random_state)
        pilot = pilot_fit(
            model,
            dataset,
            self.pilot_size,
            substream(seed, "pilot"),
            method="multiclass" if isinstance(model, MultiLogistic) else "unified",
            h_variant=None if isinstance(model, MultiLogistic) else "xnorm",
            tol=self.tol,
            max_iter=self.max_iter,
        )
        # method="uniform" is the non-informative benchmark: it always pairs
        # a uniform plan with the unweighted fit.
        sampling = "uniform" if self.method == "uniform" else self.sampling
        plan = default_plan(
            model, dataset, pilot, self.n, sampling,
            include_pilot_rows=self.pilot_overlap,
        )
        draw = draw_subsample(plan, substream(seed, "draw"))

        if self.method == "mscle":
            result = mscle_fit(
                model, dataset, plan, draw, pilot, tol=self.tol, max_iter=self.max_iter
            )
        elif self.method == "weighted":
            result = weighted_fit(
                model, dataset, plan, draw, init=pilot.beta_plt,
                tol=self.tol, max_iter=self.max_iter,
            )
        else:  # naive, uniform (uniform differs only through the plan choice)
            result = naive_fit(
                model, dataset, draw, init=pilot.beta_plt,
                tol=self.tol, max_iter=self.max_iter,
            )

        variance = None
        conf = None
        if self.compute_variance and result.converged:
            if self.method == "mscle":
                variance = estimate_sigma_mscle(
                    model, dataset, plan, draw, pilot, result.coefficients
                )
            elif self.method == "weighted":
                variance = estimate_v_weighted(
                    model, dataset, plan, draw, result.coefficients
                )
            if variance is not None:
                result = result.with_covariance(variance.covariance)
                conf = confidence_intervals(result, variance, self.conf_level)

        self.model_ = model
        self.pilot_ = pilot
        self.plan_ = plan
        self.draw_ = draw
        self.result_ = result
        self.variance_ = variance
        self.conf_int_ = conf
        self.covariance_ = result.covariance
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        self.seed_ = seed
        self._store_coefficients(result.coefficients)
        return self

    def _store_coefficients(self, beta):
        if self.fit_intercept:
            self.intercept_ = beta[0]
            self.coef_ = beta[1:]
        else:
            self.intercept_ = 0.0
            self.coef_ = beta
        self.coefficients_ = beta

    def _linear_design(self, X):
        X = check_design_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise DataValidationError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        if self.fit_intercept:
            X = np.hstack([np.ones((X.shape[0], 1)), X])
        return X


class SubsampledLogisticRegression(ClassifierMixin, _BaseSubsampledGLM):
    """Binary classifier estimated from an informative subsample.

    ``link`` selects the success curve: "logit" (canonical, default),
    "probit", or "cloglog".
    """

    def __init__(
        self,
        n=1000,
        pilot_size=400,
        sampling="lopt",
        method="mscle",
        link="logit",
        fit_intercept=True,
        pilot_overlap=False,
        compute_variance=True,
        conf_level=0.95,
        tol=1e-8,
        max_iter=100,
        random_state=None,
    ):
        super().__init__(
            n=n, pilot_size=pilot_size, sampling=sampling, method=method,
            fit_intercept=fit_intercept, pilot_overlap=pilot_overlap,
            compute_variance=compute_variance, conf_level=conf_level,
            tol=tol, max_iter=max_iter, random_state=random_state,
        )
        self.link = link

    def _make_family(self, y):
        if self.link == "logit":
            return Logistic()
        if self.link == "probit":
            return BinaryLink(PROBIT_LINK)
        if self.link == "cloglog":
            return BinaryLink(CLOGLOG_LINK)
        raise ValueError(f"unknown link {self.link!r}")

    def _encode_response(self, y):
        classes = np.unique(y)
        if classes.shape[0] != 2:
            raise DataValidationError("binary classifier needs exactly two classes")
        self.classes_ = classes
        return (y == classes[1]).astype(float)

    def predict_proba(self, X):
        design = self._linear_design(X)
        p1 = self.model_.mean(design, self.coefficients_)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return self.classes_[(self.predict_proba(X)[:, 1] >= 0.5).astype(int)]


class SubsampledMultinomialRegression(ClassifierMixin, _BaseSubsampledGLM):
    """Multi-class classifier estimated from an informative subsample.

    The highest class (in sorted label order) is the baseline with zero
    coefficients; ``coef_`` has shape (n_classes - 1, n_features).
    """

    def _make_family(self, y):
        return MultiLogistic(self.classes_.shape[0])

    def _encode_response(self, y):
        self.classes_ = np.unique(y)
        if self.classes_.shape[0] < 2:
            raise DataValidationError("need at least two classes")
        remap = {v: k for k, v in enumerate(self.classes_)}
        return np.asarray([remap[v] for v in y], dtype=float)

    def _store_coefficients(self, beta):
        d = self.n_features_in_ + (1 if self.fit_intercept else 0)
        matrix = beta.reshape(-1, d)
        if self.fit_intercept:
            self.intercept_ = matrix[:, 0].copy()
            self.coef_ = matrix[:, 1:].copy()
        else:
            self.intercept_ = np.zeros(matrix.shape[0])
            self.coef_ = matrix.copy()
        self.coefficients_ = beta

    def predict_proba(self, X):
        design = self._linear_design(X)
        return self.model_.mean(design, self.coefficients_)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


class SubsampledPoissonRegression(RegressorMixin, _BaseSubsampledGLM):
    """Count regressor estimated from an informative subsample."""

    def _make_family(self, y):
        return Poisson()

    def predict(self, X):
        design = self._linear_design(X)
        return self.model_.mean(design, self.coefficients_)
