"""Shared test utilities: data builders, hand-built pilots, brute-force oracles."""

from __future__ import annotations

import numpy as np
from scipy import stats as spst

from mscle import Dataset, MultiLogistic, PilotEstimate
from mscle.rng import substream
from mscle.sampling import sampling_statistic


def logistic_data(seed, n_rows=20_000, beta=(0.3, 0.5, -0.5, 0.25)):
    from mscle import Logistic

    beta = np.asarray(beta, dtype=float)
    rng = substream(seed, "data")
    X = np.hstack([np.ones((n_rows, 1)), rng.standard_normal((n_rows, beta.size - 1))])
    model = Logistic()
    y = (rng.random(n_rows) < model.mean(X, beta)).astype(float)
    return model, Dataset(X, y), beta


def poisson_data(seed, n_rows=20_000, beta=(0.25,) * 4):
    from mscle import Poisson

    beta = np.asarray(beta, dtype=float)
    rng = substream(seed, "data")
    X = np.hstack([np.ones((n_rows, 1)), rng.random((n_rows, beta.size - 1))])
    model = Poisson()
    y = rng.poisson(model.mean(X, beta)).astype(float)
    return model, Dataset(X, y), beta


def multiclass_data(seed, n_rows=20_000, n_classes=3, d=4):
    from mscle.simulate import generate_covariates, generate_responses

    model = MultiLogistic(n_classes)
    rng = substream(seed, "data")
    beta = np.linspace(0.05, 0.4, (n_classes - 1) * d)
    X = generate_covariates("mvnormal", n_rows, d - 1, rng)
    y = generate_responses(model, beta, X, rng)
    return model, Dataset(X, y), beta


def manual_pilot(model, beta, dataset, method, h_variant=None, psi=None, pilot_rows=200):
    """Pilot with chosen coefficients; normalizer from the first rows unless given."""
    beta = np.asarray(beta, dtype=float)
    idx = np.arange(min(pilot_rows, dataset.n_rows))
    px, py = dataset.x[idx], dataset.y[idx]
    if psi is None:
        stats = sampling_statistic(model, px, py, beta, method, h_variant, pilot_x=px)
        psi = float(stats.mean())
    return PilotEstimate(
        model=model,
        beta_plt=beta,
        psi_plt=psi,
        pilot_size=idx.size,
        method=method,
        h_variant=h_variant,
        row_indices=np.empty(0, dtype=np.intp),
        pilot_x=px,
        pilot_y=py,
    )


def brute_poisson_kappas(mu, mu_tilde, tail_mass=1e-14):
    """Truncated-sum oracle for E(y^k |y - mu~|) under Poisson(mu)."""
    upper = int(np.ceil(mu + 30.0 * np.sqrt(mu + 1.0) + 60.0))
    while spst.poisson.sf(upper, mu) > tail_mass:
        upper *= 2
    ys = np.arange(0, upper + 1, dtype=float)
    w = np.abs(ys - mu_tilde) * spst.poisson.pmf(ys, mu)
    return w.sum(), (ys * w).sum(), (ys**2 * w).sum()


def brute_binary_kappas(p_beta, p_plt):
    """Enumeration oracle over y in {0, 1}."""
    k0 = p_beta * abs(1.0 - p_plt) + (1.0 - p_beta) * abs(0.0 - p_plt)
    k1 = p_beta * abs(1.0 - p_plt)
    k2 = p_beta * 1.0 * abs(1.0 - p_plt)
    return k0, k1, k2


def finite_difference_gradient(fn, beta, rel_step=1e-6):
    """Central differences with per-coordinate step rel_step * (1 + |beta_j|)."""
    beta = np.asarray(beta, dtype=float)
    grad = np.empty_like(beta)
    for j in range(beta.size):
        h = rel_step * (1.0 + abs(beta[j]))
        up = beta.copy()
        up[j] += h
        dn = beta.copy()
        dn[j] -= h
        grad[j] = (fn(up) - fn(dn)) / (2.0 * h)
    return grad


def relative_gradient_error(analytic, approx):
    analytic = np.asarray(analytic, dtype=float)
    approx = np.asarray(approx, dtype=float)
    scale = max(float(np.linalg.norm(analytic)), 1e-8)
    return float(np.linalg.norm(analytic - approx)) / scale
