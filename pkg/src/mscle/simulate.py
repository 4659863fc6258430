"""Monte Carlo harness: data generators, replication loops, MSE decomposition.

A study draws fresh data per replication, fits a pilot on a uniform
subsample, builds one informative plan per target size, and runs every
requested estimator on the shared draw (the uniform benchmark gets its
own non-informative draw).  Replications own disjoint random streams
keyed by the master seed and the replication index, so results are
bit-reproducible for a fixed master seed regardless of worker count.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__ as _pkg_version
from .data import Dataset
from .errors import MscleError
from .families import Family, Logistic, MultiLogistic, Poisson, softmax_rows
from .estimators import mscle_fit, naive_fit, weighted_fit
from .rng import substream
from .sampling import (
    PilotEstimate,
    default_plan,
    draw_subsample,
    misspecify_pilot,
    pilot_fit,
    uniform_probabilities,
)
from .variance import confidence_intervals, estimate_sigma_mscle, estimate_v_weighted

__all__ = [
    "ScenarioSpec",
    "CellResult",
    "StudyResult",
    "InferenceStudyResult",
    "generate_covariates",
    "generate_responses",
    "run_study",
    "run_inference_study",
    "decompose_bias_variance",
    "preset_scenario",
    "PRESET_NAMES",
    "resolve_workers",
]

COVARIATE_LAWS = (
    "mvnormal",
    "mvlognormal",
    "mvt3",
    "iid-exponential",
    "iid-uniform",
    "iid-beta",
)

METHODS = ("mscle", "weighted", "naive", "uniform")


def resolve_workers(requested: int | None = None) -> int:
    """Worker count: explicit request, else MSCLE_THREADS, else CPU count."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("MSCLE_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _ar_cholesky(n_slopes: int, rho: float = 0.5) -> np.ndarray:
    idx = np.arange(n_slopes)
    omega = rho ** np.abs(idx[:, None] - idx[None, :])
    return np.linalg.cholesky(omega)


def generate_covariates(
    law: str,
    n_rows: int,
    n_slopes: int,
    rng: np.random.Generator,
    rate: float = 1.0,
) -> np.ndarray:
    """Covariate matrix with a leading all-ones column.

    The multivariate laws share the AR correlation 0.5^|i-j| across slope
    columns; ``rate`` applies to the exponential law only.
    """
    if law == "mvnormal":
        slopes = rng.standard_normal((n_rows, n_slopes)) @ _ar_cholesky(n_slopes).T
    elif law == "mvlognormal":
        z = rng.standard_normal((n_rows, n_slopes)) @ _ar_cholesky(n_slopes).T
        slopes = np.exp(z)
    elif law == "mvt3":
        z = rng.standard_normal((n_rows, n_slopes)) @ _ar_cholesky(n_slopes).T
        chi = rng.chisquare(3.0, size=n_rows)
        slopes = z / np.sqrt(chi / 3.0)[:, None]
    elif law == "iid-exponential":
        slopes = rng.exponential(scale=1.0 / rate, size=(n_rows, n_slopes))
    elif law == "iid-uniform":
        slopes = rng.random((n_rows, n_slopes))
    elif law == "iid-beta":
        slopes = rng.beta(2.0, 5.0, size=(n_rows, n_slopes))
    else:
        raise ValueError(f"unknown covariate law {law!r}; choose from {COVARIATE_LAWS}")
    return np.hstack([np.ones((n_rows, 1)), slopes])


def generate_responses(
    model: Family,
    beta_true: np.ndarray,
    X: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw y | x from the family at the given coefficients."""
    beta_true = model.validate_beta(beta_true, X.shape[1])
    if isinstance(model, MultiLogistic):
        probs = softmax_rows(model.linear_predictors(X, beta_true))
        u = rng.random(X.shape[0])
        labels = (u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1)
        return np.minimum(labels, model.n_classes - 1).astype(float)
    if isinstance(model, Poisson):
        return rng.poisson(model.mean(X, beta_true)).astype(float)
    return (rng.random(X.shape[0]) < model.mean(X, beta_true)).astype(float)


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation setting: family, truth, covariate law, and study sizes."""

    family: Family
    beta_true: np.ndarray
    covariate_law: str
    n_grid: tuple[int, ...] = (500, 1000, 2000)
    n_rows: int = 100_000
    pilot_size: int = 400
    replications: int = 200
    law_rate: float = 1.0
    misspecified_pilot: bool = False
    methods: tuple[str, ...] = ("mscle", "weighted", "naive")
    sampling: str = "lopt"

    def __post_init__(self):
        object.__setattr__(self, "beta_true", np.asarray(self.beta_true, dtype=float))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.covariate_law not in COVARIATE_LAWS:
            raise ValueError(f"unknown covariate law {self.covariate_law!r}")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if any(n > self.n_rows for n in self.n_grid):
            raise ValueError("target subsample sizes cannot exceed the data size")

    @property
    def n_slopes(self) -> int:
        if isinstance(self.family, MultiLogistic):
            d = self.beta_true.shape[0] // (self.family.n_classes - 1)
        else:
            d = self.beta_true.shape[0]
        return d - 1

    def describe(self) -> dict:
        return {
            "family": repr(self.family),
            "beta_true": [float(v) for v in self.beta_true],
            "covariate_law": self.covariate_law,
            "law_rate": self.law_rate,
            "n_rows": self.n_rows,
            "n_grid": list(self.n_grid),
            "pilot_size": self.pilot_size,
            "replications": self.replications,
            "misspecified_pilot": self.misspecified_pilot,
            "methods": list(self.methods),
            "sampling": self.sampling,
        }


def decompose_bias_variance(
    estimates: np.ndarray, reference: np.ndarray
) -> tuple[float, float, float]:
    """(bias^2, variance, MSE) of an estimate cloud around a reference.

    MSE is the average squared distance to the reference; it equals
    bias^2 + variance exactly up to float rounding.  A single estimate
    yields zero variance.
    """
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    if estimates.shape[0] < 1:
        raise ValueError("need at least one estimate")
    reference = np.asarray(reference, dtype=float)
    errors = estimates - reference
    mse = float(np.mean(np.sum(errors**2, axis=1)))
    center = estimates.mean(axis=0)
    bias2 = float(np.sum((center - reference) ** 2))
    spread = estimates - center
    variance = float(np.mean(np.sum(spread**2, axis=1)))
    return bias2, variance, mse


@dataclass(frozen=True)
class CellResult:
    """Aggregated outcome for one (method, n) cell of a study."""

    method: str
    n: int
    bias2: float
    variance: float
    mse: float
    n_used: int
    failures: int
    estimates: np.ndarray = field(repr=False)

    @property
    def valid(self) -> bool:
        return self.n_used > 0


@dataclass(frozen=True)
class StudyResult:
    """All cells of one study plus enough metadata to re-run it."""

    scenario: dict
    master_seed: int
    cells: tuple[CellResult, ...]

    def cell(self, method: str, n: int) -> CellResult:
        for c in self.cells:
            if c.method == method and c.n == n:
                return c
        raise KeyError(f"no cell for method={method!r}, n={n}")

    def mse(self, method: str, n: int) -> float:
        return self.cell(method, n).mse

    def summary_rows(self) -> list[dict]:
        return [
            {
                "method": c.method,
                "n": c.n,
                "bias2": c.bias2,
                "variance": c.variance,
                "mse": c.mse,
                "n_used": c.n_used,
                "failures": c.failures,
            }
            for c in self.cells
        ]

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "master_seed": self.master_seed,
            "package_version": _pkg_version,
            "numpy_version": np.__version__,
            "cells": self.summary_rows(),
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("method,n,bias2,variance,mse,n_used,failures\n")
            for row in self.summary_rows():
                fh.write(
                    f"{row['method']},{row['n']},{row['bias2']!r},{row['variance']!r},"
                    f"{row['mse']!r},{row['n_used']},{row['failures']}\n"
                )

    def write_long_csv(self, path) -> None:
        """Plot-ready rows (method, n, mse, log10_mse) for MSE-vs-n curves."""
        with open(path, "w") as fh:
            fh.write("method,n,mse,log10_mse\n")
            for row in self.summary_rows():
                log_mse = math.log10(row["mse"]) if row["mse"] > 0 else float("nan")
                fh.write(f"{row['method']},{row['n']},{row['mse']!r},{log_mse!r}\n")


def _fit_one(method, model, dataset, plan, draw, pilot, tol, max_iter):
    if method == "mscle":
        return mscle_fit(model, dataset, plan, draw, pilot, tol=tol, max_iter=max_iter)
    if method == "weighted":
        return weighted_fit(
            model, dataset, plan, draw, init=pilot.beta_plt, tol=tol, max_iter=max_iter
        )
    if method == "naive":
        return naive_fit(model, dataset, draw, init=pilot.beta_plt, tol=tol, max_iter=max_iter)
    raise ValueError(f"unknown method {method!r}")


def _replication_data(spec: ScenarioSpec, master_seed: int, rep: int) -> Dataset:
    rng = substream(master_seed, rep, "data")
    X = generate_covariates(
        spec.covariate_law, spec.n_rows, spec.n_slopes, rng, rate=spec.law_rate
    )
    y = generate_responses(spec.family, spec.beta_true, X, rng)
    return Dataset(X, y)


def _replication_pilot(
    spec: ScenarioSpec, dataset: Dataset, master_seed: int, rep: int
) -> PilotEstimate:
    method = "multiclass" if isinstance(spec.family, MultiLogistic) else "unified"
    h_variant = None if method == "multiclass" else "xnorm"
    pilot = pilot_fit(
        spec.family,
        dataset,
        spec.pilot_size,
        substream(master_seed, rep, "pilot"),
        method=method,
        h_variant=h_variant,
    )
    if spec.misspecified_pilot:
        pilot = misspecify_pilot(pilot, substream(master_seed, rep, "pilot-shift"))
    return pilot


def _study_worker(payload) -> list:
    spec, master_seed, rep, tol, max_iter = payload
    model = spec.family
    out = []
    dataset = _replication_data(spec, master_seed, rep)
    try:
        pilot = _replication_pilot(spec, dataset, master_seed, rep)
    except MscleError:
        return [(m, n, None) for m in spec.methods for n in spec.n_grid]

    informative = [m for m in spec.methods if m != "uniform"]
    for n in spec.n_grid:
        if informative:
            plan = None
            try:
                plan = default_plan(model, dataset, pilot, n, spec.sampling)
                draw = draw_subsample(plan, substream(master_seed, rep, "draw", n))
            except MscleError:
                plan = None
            for m in informative:
                est = None
                if plan is not None:
                    try:
                        fit = _fit_one(m, model, dataset, plan, draw, pilot, tol, max_iter)
                        if fit.converged:
                            est = fit.coefficients
                    except MscleError:
                        est = None
                out.append((m, n, est))
        if "uniform" in spec.methods:
            est = None
            try:
                uplan = uniform_probabilities(dataset, n)
                udraw = draw_subsample(
                    uplan, substream(master_seed, rep, "uniform-draw", n)
                )
                fit = naive_fit(
                    model, dataset, udraw, init=pilot.beta_plt, tol=tol, max_iter=max_iter
                )
                if fit.converged:
                    est = fit.coefficients
            except MscleError:
                est = None
            out.append(("uniform", n, est))
    return out


def _parallel_map(fn, payloads, workers: int):
    if workers <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, len(payloads) // (workers * 4))
        return list(pool.map(fn, payloads, chunksize=chunk))


def run_study(
    spec: ScenarioSpec,
    master_seed: int,
    workers: int | None = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> StudyResult:
    """Run the full replication loop and aggregate per-cell MSE statistics.

    Failed replications (pilot failures, non-convergent or degenerate
    fits) are excluded from the moments and counted per cell.
    """
    workers = resolve_workers(workers)
    payloads = [(spec, master_seed, rep, tol, max_iter) for rep in range(spec.replications)]
    per_rep = _parallel_map(_study_worker, payloads, workers)

    collected: dict[tuple[str, int], list[np.ndarray]] = {
        (m, n): [] for m in spec.methods for n in spec.n_grid
    }
    failures = {key: 0 for key in collected}
    for rep_cells in per_rep:
        for method, n, est in rep_cells:
            if est is None:
                failures[(method, n)] += 1
            else:
                collected[(method, n)].append(np.asarray(est))

    cells = []
    for method in spec.methods:
        for n in spec.n_grid:
            ests = collected[(method, n)]
            if ests:
                stacked = np.vstack(ests)
                bias2, variance, mse = decompose_bias_variance(stacked, spec.beta_true)
                cells.append(
                    CellResult(
                        method, n, bias2, variance, mse,
                        stacked.shape[0], failures[(method, n)], stacked,
                    )
                )
            else:
                cells.append(
                    CellResult(
                        method, n, float("nan"), float("nan"), float("nan"),
                        0, failures[(method, n)], np.empty((0, spec.beta_true.shape[0])),
                    )
                )
    return StudyResult(spec.describe(), int(master_seed), tuple(cells))


@dataclass(frozen=True)
class InferenceStudyResult:
    """Per-replication inference diagnostics for one (scenario, n) cell."""

    covered: np.ndarray        # (R_ok, p) booleans: CI covered the truth
    trace_mscle: np.ndarray    # (R_ok,) trace of the n-scaled MSCLE covariance
    trace_weighted: np.ndarray  # (R_ok,) trace of the n-scaled sandwich
    failures: int

    @property
    def coverage(self) -> np.ndarray:
        return self.covered.mean(axis=0)

    @property
    def ordering_rate(self) -> float:
        """Share of replications with trace(MSCLE cov) <= trace(weighted cov)."""
        return float(np.mean(self.trace_mscle <= self.trace_weighted))


def _inference_worker(payload):
    spec, n, master_seed, rep, level = payload
    model = spec.family
    dataset = _replication_data(spec, master_seed, rep)
    try:
        pilot = _replication_pilot(spec, dataset, master_seed, rep)
        plan = default_plan(model, dataset, pilot, n, spec.sampling)
        draw = draw_subsample(plan, substream(master_seed, rep, "draw", n))
        fit_m = mscle_fit(model, dataset, plan, draw, pilot)
        fit_w = weighted_fit(model, dataset, plan, draw, init=pilot.beta_plt)
        if not (fit_m.converged and fit_w.converged):
            return None
        var_m = estimate_sigma_mscle(model, dataset, plan, draw, pilot, fit_m.coefficients)
        var_w = estimate_v_weighted(model, dataset, plan, draw, fit_w.coefficients)
        ci = confidence_intervals(fit_m, var_m, level)
        covered = (ci[:, 0] <= spec.beta_true) & (spec.beta_true <= ci[:, 1])
        return (
            covered,
            float(np.trace(var_m.scaled_covariance)),
            float(np.trace(var_w.scaled_covariance)),
        )
    except MscleError:
        return None


def run_inference_study(
    spec: ScenarioSpec,
    n: int,
    master_seed: int,
    level: float = 0.95,
    workers: int | None = None,
) -> InferenceStudyResult:
    """Coverage of the conditional-fit intervals plus paired variance traces."""
    workers = resolve_workers(workers)
    payloads = [(spec, n, master_seed, rep, level) for rep in range(spec.replications)]
    results = _parallel_map(_inference_worker, payloads, workers)
    ok = [r for r in results if r is not None]
    failures = len(results) - len(ok)
    if not ok:
        return InferenceStudyResult(
            np.empty((0, spec.beta_true.shape[0]), dtype=bool),
            np.empty(0), np.empty(0), failures,
        )
    covered = np.vstack([r[0] for r in ok])
    tr_m = np.asarray([r[1] for r in ok])
    tr_w = np.asarray([r[2] for r in ok])
    return InferenceStudyResult(covered, tr_m, tr_w, failures)


_MULTICLASS_BETA = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4)
_POISSON_BETA = (0.25,) * 7

_PRESETS = {
    "multiclass-normal": ("multiclass", "mvnormal", 1.0),
    "multiclass-lognormal": ("multiclass", "mvlognormal", 1.0),
    "multiclass-t3": ("multiclass", "mvt3", 1.0),
    "multiclass-exponential": ("multiclass", "iid-exponential", 1.0),
    "poisson-uniform": ("poisson", "iid-uniform", 1.0),
    "poisson-beta": ("poisson", "iid-beta", 1.0),
    "poisson-normal": ("poisson", "mvnormal", 1.0),
    "poisson-exponential": ("poisson", "iid-exponential", 2.0),
}

PRESET_NAMES = tuple(_PRESETS)


def preset_scenario(name: str, **overrides) -> ScenarioSpec:
    """Bundled desk-scale scenarios over four covariate laws per family.

    The multiclass presets use K=3 classes with d=4 covariates; the
    Poisson presets use d=7 with all slopes at 0.25.  Override any
    ScenarioSpec field by keyword (e.g. ``replications=20``).
    """
    if name not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    kind, law, rate = _PRESETS[name]
    if kind == "multiclass":
        base = ScenarioSpec(
            family=MultiLogistic(3),
            beta_true=np.asarray(_MULTICLASS_BETA),
            covariate_law=law,
            law_rate=rate,
        )
    else:
        base = ScenarioSpec(
            family=Poisson(),
            beta_true=np.asarray(_POISSON_BETA),
            covariate_law=law,
            law_rate=rate,
        )
    return replace(base, **overrides) if overrides else base
