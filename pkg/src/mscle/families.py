"""Exponential-family GLM primitives.

Each family exposes vectorized building blocks (means, per-row scores,
log densities, expected information) shared by the full-data MLE, the
subsample estimators, and the sampling-probability machinery.  The
response density has the shape ``a(y, phi) * exp({y*b(eta) - c(eta)}/phi)``
with linear predictor ``eta = x @ beta``; all three built-in families have
dispersion ``phi = 1``.

Coefficient layout: a length-``d`` vector for univariate families, and the
stacked free blocks ``(beta_1, ..., beta_{K-1})`` of length ``(K-1)*d`` for
``MultiLogistic`` (the last class is the baseline with coefficients pinned
at zero).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special as sps
from scipy import stats as spst

from .errors import DataValidationError

__all__ = [
    "Family",
    "Logistic",
    "BinaryLink",
    "MultiLogistic",
    "Poisson",
    "LinkSpec",
    "PROBIT_LINK",
    "CLOGLOG_LINK",
    "softmax_rows",
    "mean_response",
    "score",
    "log_density",
]

# exp() overflows just above 709; linear predictors feeding exp() are capped
# here so misspecified pilots cannot produce inf/nan sampling statistics.
ETA_EXP_CAP = 700.0


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction; safe for entries up to +-inf."""
    logits = np.atleast_2d(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(shifted)
    return w / w.sum(axis=1, keepdims=True)


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels.astype(np.intp)] = 1.0
    return out


@dataclass(frozen=True)
class LinkSpec:
    """Success-probability curve for a binary response model.

    ``prob`` maps the linear predictor to (0, 1) strictly monotonically;
    ``dprob`` is its derivative and ``d2prob`` (optional) its second
    derivative, needed only for the full-Hessian diagnostic.
    """

    name: str
    prob: Callable[[np.ndarray], np.ndarray]
    dprob: Callable[[np.ndarray], np.ndarray]
    d2prob: Callable[[np.ndarray], np.ndarray] | None = None


def _probit_p(eta):
    return spst.norm.cdf(eta)


def _probit_dp(eta):
    return spst.norm.pdf(eta)


def _probit_d2p(eta):
    return -eta * spst.norm.pdf(eta)


def _cloglog_p(eta):
    return -np.expm1(-np.exp(np.minimum(eta, ETA_EXP_CAP)))


def _cloglog_dp(eta):
    e = np.exp(np.minimum(eta, ETA_EXP_CAP))
    return e * np.exp(-e)


def _cloglog_d2p(eta):
    e = np.exp(np.minimum(eta, ETA_EXP_CAP))
    return e * (1.0 - e) * np.exp(-e)


PROBIT_LINK = LinkSpec("probit", _probit_p, _probit_dp, _probit_d2p)
CLOGLOG_LINK = LinkSpec("cloglog", _cloglog_p, _cloglog_dp, _cloglog_d2p)


class Family:
    """Base class; subclasses implement the vectorized primitives."""

    dispersion: float = 1.0
    kind: str = ""

    def n_params(self, n_features: int) -> int:
        return n_features

    def validate_response(self, y: np.ndarray) -> None:
        raise NotImplementedError

    def validate_beta(self, beta: np.ndarray, n_features: int) -> np.ndarray:
        beta = np.asarray(beta, dtype=float).ravel()
        expected = self.n_params(n_features)
        if beta.shape[0] != expected:
            raise ValueError(
                f"coefficient vector has length {beta.shape[0]}, expected {expected}"
            )
        if not np.all(np.isfinite(beta)):
            raise ValueError("coefficient vector has non-finite entries")
        return beta

    # -- vectorized primitives -------------------------------------------
    def mean(self, X: np.ndarray, beta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_density_rows(self, X, y, beta) -> np.ndarray:
        raise NotImplementedError

    def score_rows(self, X, y, beta) -> np.ndarray:
        raise NotImplementedError

    def loglik(self, X, y, beta, weights=None) -> float:
        rows = self.log_density_rows(X, y, beta)
        if weights is None:
            return float(rows.sum())
        return float(rows @ weights)

    def score_total(self, X, y, beta, weights=None) -> np.ndarray:
        rows = self.score_rows(X, y, beta)
        if weights is None:
            return rows.sum(axis=0)
        return rows.T @ weights

    def information(self, X, beta, weights=None) -> np.ndarray:
        """Expected (Fisher) information of the chosen rows, optionally weighted."""
        raise NotImplementedError


class _Univariate(Family):
    """Shared machinery for scalar-response families of the b/c form."""

    def b_prime(self, eta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def mean_from_eta(self, eta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def variance_from_eta(self, eta: np.ndarray) -> np.ndarray:
        """Conditional response variance, for the expected information."""
        raise NotImplementedError

    def mean(self, X, beta):
        return self.mean_from_eta(X @ beta)

    def score_rows(self, X, y, beta):
        eta = X @ beta
        resid = (y - self.mean_from_eta(eta)) * self.b_prime(eta) / self.dispersion
        return resid[:, None] * X

    def information(self, X, beta, weights=None):
        eta = X @ beta
        w = self.variance_from_eta(eta) * self.b_prime(eta) ** 2 / self.dispersion**2
        if weights is not None:
            w = w * weights
        return (X * w[:, None]).T @ X


class Logistic(_Univariate):
    """Binary response with the canonical logit curve."""

    kind = "logistic"

    def validate_response(self, y):
        if not np.all((y == 0.0) | (y == 1.0)):
            raise DataValidationError("logistic response must be coded 0/1")

    def b_prime(self, eta):
        return np.ones_like(eta)

    def mean_from_eta(self, eta):
        return sps.expit(eta)

    def variance_from_eta(self, eta):
        p = sps.expit(eta)
        return p * (1.0 - p)

    def log_density_rows(self, X, y, beta):
        eta = X @ beta
        # y*eta - log(1 + e^eta), computed without overflow
        return y * eta - np.logaddexp(0.0, eta)

    def __repr__(self):
        return "Logistic()"


class BinaryLink(_Univariate):
    """Binary response with an arbitrary strictly monotone success curve."""

    kind = "binary"

    def __init__(self, link: LinkSpec):
        self.link = link

    def validate_response(self, y):
        if not np.all((y == 0.0) | (y == 1.0)):
            raise DataValidationError("binary response must be coded 0/1")

    def b_prime(self, eta):
        p = self.link.prob(eta)
        return self.link.dprob(eta) / (p * (1.0 - p))

    def b_second(self, eta):
        """d^2/deta^2 of log{p/(1-p)}; needs the link's second derivative."""
        if self.link.d2prob is None:
            raise ValueError(f"link {self.link.name!r} does not provide d2prob")
        p = self.link.prob(eta)
        dp = self.link.dprob(eta)
        v = p * (1.0 - p)
        return self.link.d2prob(eta) / v - dp**2 * (1.0 - 2.0 * p) / v**2

    def mean_from_eta(self, eta):
        return self.link.prob(eta)

    def variance_from_eta(self, eta):
        p = self.link.prob(eta)
        return p * (1.0 - p)

    def information(self, X, beta, weights=None):
        eta = X @ beta
        p = self.link.prob(eta)
        w = self.link.dprob(eta) ** 2 / (p * (1.0 - p))
        if weights is not None:
            w = w * weights
        return (X * w[:, None]).T @ X

    def log_density_rows(self, X, y, beta):
        p = self.link.prob(X @ beta)
        with np.errstate(divide="ignore"):
            return y * np.log(p) + (1.0 - y) * np.log1p(-p)

    def __repr__(self):
        return f"BinaryLink({self.link.name!r})"

    def __eq__(self, other):
        return isinstance(other, BinaryLink) and other.link.name == self.link.name

    def __hash__(self):
        return hash(("binary", self.link.name))


class Poisson(_Univariate):
    """Count response with the canonical log link."""

    kind = "poisson"

    def validate_response(self, y):
        if np.any(y < 0) or not np.all(y == np.floor(y)):
            raise DataValidationError("poisson response must be nonnegative integers")

    def b_prime(self, eta):
        return np.ones_like(eta)

    def mean_from_eta(self, eta):
        return np.exp(np.minimum(eta, ETA_EXP_CAP))

    def variance_from_eta(self, eta):
        return np.exp(np.minimum(eta, ETA_EXP_CAP))

    def log_density_rows(self, X, y, beta):
        eta = X @ beta
        return y * eta - np.exp(np.minimum(eta, ETA_EXP_CAP)) - sps.gammaln(y + 1.0)

    def __repr__(self):
        return "Poisson()"


class MultiLogistic(Family):
    """Multinomial response over K classes; baseline class K-1 has zero block."""

    kind = "multiclass"

    def __init__(self, n_classes: int):
        if n_classes < 2:
            raise ValueError("MultiLogistic needs at least 2 classes")
        self.n_classes = int(n_classes)

    def n_params(self, n_features):
        return (self.n_classes - 1) * n_features

    def validate_response(self, y):
        if np.any(y != np.floor(y)) or np.any(y < 0) or np.any(y >= self.n_classes):
            raise DataValidationError(
                f"class labels must be integers in 0..{self.n_classes - 1}"
            )

    def coefficient_matrix(self, beta, n_features) -> np.ndarray:
        """Free blocks reshaped to (K-1, d); the implicit baseline row is zero."""
        return np.asarray(beta, dtype=float).reshape(self.n_classes - 1, n_features)

    def linear_predictors(self, X, beta) -> np.ndarray:
        B = self.coefficient_matrix(beta, X.shape[1])
        eta = np.empty((X.shape[0], self.n_classes))
        eta[:, :-1] = X @ B.T
        eta[:, -1] = 0.0
        return eta

    def mean(self, X, beta):
        return softmax_rows(self.linear_predictors(X, beta))

    def log_density_rows(self, X, y, beta):
        eta = self.linear_predictors(X, beta)
        lse = sps.logsumexp(eta, axis=1)
        picked = eta[np.arange(eta.shape[0]), y.astype(np.intp)]
        return picked - lse

    def score_rows(self, X, y, beta):
        probs = self.mean(X, beta)
        resid = _one_hot(np.asarray(y), self.n_classes)[:, :-1] - probs[:, :-1]
        n, d = X.shape
        return np.einsum("nk,nd->nkd", resid, X).reshape(n, (self.n_classes - 1) * d)

    def information(self, X, beta, weights=None):
        probs = self.mean(X, beta)[:, :-1]
        return self.information_from_probs(X, probs, weights)

    @staticmethod
    def information_from_probs(X, free_probs, weights=None):
        """Block information sum_i w_i {diag(p_i) - p_i p_i^T} (x) x_i x_i^T."""
        n, d = X.shape
        km1 = free_probs.shape[1]
        W = -np.einsum("nk,nl->nkl", free_probs, free_probs)
        idx = np.arange(km1)
        W[:, idx, idx] += free_probs
        if weights is not None:
            W = W * weights[:, None, None]
        info = np.einsum("nkl,ni,nj->kilj", W, X, X)
        return info.reshape(km1 * d, km1 * d)

    def one_hot(self, y):
        return _one_hot(np.asarray(y), self.n_classes)

    def __repr__(self):
        return f"MultiLogistic({self.n_classes})"

    def __eq__(self, other):
        return isinstance(other, MultiLogistic) and other.n_classes == self.n_classes

    def __hash__(self):
        return hash(("multiclass", self.n_classes))


def _as_row(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a single observation as a 1-D covariate vector")
    return x[None, :]


def mean_response(model: Family, beta, x):
    """Mean of y given one covariate vector x.

    Returns a scalar for univariate families and a length-K probability
    vector for ``MultiLogistic``.
    """
    X = _as_row(x)
    beta = model.validate_beta(beta, X.shape[1])
    m = model.mean(X, beta)
    if isinstance(model, MultiLogistic):
        return m[0]
    return float(m[0])


def score(model: Family, beta, x, y):
    """Per-observation score (gradient of the log density) at one point."""
    X = _as_row(x)
    beta = model.validate_beta(beta, X.shape[1])
    yv = np.asarray([y], dtype=float)
    return model.score_rows(X, yv, beta)[0]


def log_density(model: Family, beta, x, y):
    """log f(y | x; beta), including the y-only normalization terms."""
    X = _as_row(x)
    beta = model.validate_beta(beta, X.shape[1])
    yv = np.asarray([y], dtype=float)
    return float(model.log_density_rows(X, yv, beta)[0])
