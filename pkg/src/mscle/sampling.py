"""Pilot estimation, informative sampling probabilities, and Bernoulli draws.

Rows are included independently with probability
``pi_i = min(1, n * s_i / (N * psi))`` where ``s_i`` is an informativeness
statistic evaluated at the pilot coefficients and ``psi`` is the pilot-
sample mean of that statistic.  Rows whose statistic is exactly zero keep
probability zero: they can never be selected and therefore never enter
any downstream estimator, which is consistent with conditioning every
estimator on the realized draw.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import DegeneratePilot, MscleError, PilotFailure, SingularInformation
from .families import Family, MultiLogistic, _Univariate
from .fitting import DEFAULT_MAX_ITER, DEFAULT_TOL, fisher_scoring_mle

__all__ = [
    "GRADIENT_NORM",
    "UNIFIED",
    "MULTICLASS_LOPT",
    "UNIFORM",
    "H_ONES",
    "H_XNORM",
    "H_AOPT",
    "PilotEstimate",
    "SubsamplePlan",
    "SubsampleDraw",
    "pilot_fit",
    "misspecify_pilot",
    "gradient_norm_probabilities",
    "unified_glm_probabilities",
    "multiclass_probabilities",
    "uniform_probabilities",
    "default_plan",
    "draw_subsample",
    "plan_draw_to_csv",
    "plan_draw_from_csv",
]

GRADIENT_NORM = "gradnorm"
UNIFIED = "unified"
MULTICLASS_LOPT = "multiclass"
UNIFORM = "uniform"

H_ONES = "ones"
H_XNORM = "xnorm"
H_AOPT = "aopt"

INFORMATIVE_METHODS = (GRADIENT_NORM, UNIFIED, MULTICLASS_LOPT)


def _h_values(h_variant, X, model, pilot_beta, pilot_x):
    if h_variant in (None, H_ONES):
        return np.ones(X.shape[0])
    if h_variant == H_XNORM:
        return np.linalg.norm(X, axis=1)
    if h_variant == H_AOPT:
        # Fisher information estimated from the pilot rows at the pilot fit;
        # the overall scale cancels through the psi normalizer.
        fisher = model.information(pilot_x, pilot_beta) / pilot_x.shape[0]
        try:
            transformed = np.linalg.solve(fisher, X.T).T
        except np.linalg.LinAlgError:
            raise SingularInformation(
                "pilot information matrix is singular; cannot form A-opt h(x)"
            ) from None
        return np.linalg.norm(transformed, axis=1)
    raise ValueError(f"unknown h variant {h_variant!r}")


def sampling_statistic(
    model: Family,
    X: np.ndarray,
    y: np.ndarray,
    pilot_beta: np.ndarray,
    method: str,
    h_variant: str | None = None,
    pilot_x: np.ndarray | None = None,
) -> np.ndarray:
    """Unnormalized per-row informativeness for the given design."""
    if method == GRADIENT_NORM:
        return np.linalg.norm(model.score_rows(X, y, pilot_beta), axis=1)
    if method == UNIFIED:
        if not isinstance(model, _Univariate):
            raise ValueError("unified statistic applies to scalar-response families")
        eta = X @ pilot_beta
        base = np.abs(y - model.mean_from_eta(eta)) * np.abs(model.b_prime(eta))
        return base * _h_values(h_variant, X, model, pilot_beta, pilot_x)
    if method == MULTICLASS_LOPT:
        if not isinstance(model, MultiLogistic):
            raise ValueError("multiclass statistic requires a MultiLogistic model")
        probs = model.mean(X, pilot_beta)
        resid = model.one_hot(y) - probs
        return np.linalg.norm(resid, axis=1) * np.linalg.norm(X, axis=1)
    raise ValueError(f"unknown sampling method {method!r}")


@dataclass(frozen=True)
class PilotEstimate:
    """Pilot coefficients plus the normalizer for one sampling statistic.

    The pilot rows themselves are retained so the normalizer can be
    re-derived under shifted coefficients and so the A-opt criterion can
    estimate its information matrix.
    """

    model: Family
    beta_plt: np.ndarray
    psi_plt: float
    pilot_size: int
    method: str
    h_variant: str | None
    row_indices: np.ndarray
    pilot_x: np.ndarray
    pilot_y: np.ndarray

    def psi_for(self, method: str, h_variant: str | None) -> float:
        """Normalizer for an arbitrary statistic, from the stored pilot rows."""
        if method == self.method and h_variant == self.h_variant:
            return self.psi_plt
        stats = sampling_statistic(
            self.model, self.pilot_x, self.pilot_y, self.beta_plt,
            method, h_variant, pilot_x=self.pilot_x,
        )
        return float(stats.mean())


@dataclass(frozen=True)
class SubsamplePlan:
    """Per-row inclusion probabilities for one target average size."""

    probabilities: np.ndarray
    target_avg_size: int
    method: str
    h_variant: str | None = None

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=float)
        if not np.all(np.isfinite(probs)):
            raise MscleError("sampling probabilities contain NaN or inf")
        if probs.min(initial=0.0) < 0.0 or probs.max(initial=0.0) > 1.0:
            raise MscleError("sampling probabilities must lie in [0, 1]")
        object.__setattr__(self, "probabilities", probs)

    @property
    def expected_size(self) -> float:
        return float(self.probabilities.sum())

    @property
    def is_informative(self) -> bool:
        return self.method in INFORMATIVE_METHODS


@dataclass(frozen=True)
class SubsampleDraw:
    """Realized 0/1 inclusion indicators from one Bernoulli pass."""

    indicators: np.ndarray
    realized_size: int
    seed: str | None = None

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.indicators)


def pilot_fit(
    model: Family,
    dataset: Dataset,
    pilot_size: int,
    rng: np.random.Generator,
    method: str = GRADIENT_NORM,
    h_variant: str | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> PilotEstimate:
    """Fit the pilot on a uniform without-replacement sample.

    Raises :class:`PilotFailure` when the pilot MLE does not converge or
    the pilot sample is degenerate (e.g. a single response class), and
    :class:`DegeneratePilot` when the resulting normalizer is zero.
    """
    n_params = model.n_params(dataset.n_features)
    if pilot_size < n_params + 1:
        raise ValueError(
            f"pilot_size {pilot_size} is below n_params + 1 = {n_params + 1}"
        )
    if pilot_size > dataset.n_rows:
        raise ValueError("pilot_size exceeds the number of rows")

    indices = np.sort(rng.choice(dataset.n_rows, size=pilot_size, replace=False))
    sub = dataset.subset(indices)

    if model.kind in ("logistic", "binary", "multiclass"):
        if np.unique(sub.y).shape[0] < 2:
            raise PilotFailure("pilot sample contains a single response class")

    try:
        fit = fisher_scoring_mle(model, sub, tol=tol, max_iter=max_iter)
    except SingularInformation as exc:
        raise PilotFailure(f"pilot fit failed: {exc}") from exc
    if not fit.converged:
        raise PilotFailure("pilot fit did not converge")

    stats = sampling_statistic(
        model, sub.x, sub.y, fit.coefficients, method, h_variant, pilot_x=sub.x
    )
    psi = float(stats.mean())
    if psi <= 0.0:
        raise DegeneratePilot("pilot normalizer is zero")
    return PilotEstimate(
        model=model,
        beta_plt=fit.coefficients,
        psi_plt=psi,
        pilot_size=pilot_size,
        method=method,
        h_variant=h_variant,
        row_indices=indices,
        pilot_x=sub.x,
        pilot_y=sub.y,
    )


def misspecify_pilot(pilot: PilotEstimate, rng: np.random.Generator) -> PilotEstimate:
    """Shift every pilot coefficient by an independent U(1, 2) draw.

    The normalizer is re-derived on the stored pilot rows under the
    shifted coefficients, so downstream plans use a self-consistent
    (if wrong) pilot.
    """
    shift = rng.uniform(1.0, 2.0, size=pilot.beta_plt.shape[0])
    beta = pilot.beta_plt + shift
    stats = sampling_statistic(
        pilot.model, pilot.pilot_x, pilot.pilot_y, beta,
        pilot.method, pilot.h_variant, pilot_x=pilot.pilot_x,
    )
    psi = float(stats.mean())
    if psi <= 0.0:
        raise DegeneratePilot("shifted pilot normalizer is zero")
    return replace(pilot, beta_plt=beta, psi_plt=psi)


def _build_plan(
    model: Family,
    dataset: Dataset,
    pilot: PilotEstimate,
    n: int,
    method: str,
    h_variant: str | None,
    include_pilot_rows: bool,
) -> SubsamplePlan:
    if n < 1:
        raise ValueError("target average subsample size must be at least 1")
    psi = pilot.psi_for(method, h_variant)
    if psi <= 0.0:
        raise DegeneratePilot("pilot normalizer is zero")
    stats = sampling_statistic(
        model, dataset.x, dataset.y, pilot.beta_plt, method, h_variant,
        pilot_x=pilot.pilot_x,
    )
    probs = np.minimum(1.0, n * stats / (dataset.n_rows * psi))
    if not include_pilot_rows:
        probs[pilot.row_indices] = 0.0
    return SubsamplePlan(probs, int(n), method, h_variant)


def gradient_norm_probabilities(
    model: Family,
    dataset: Dataset,
    pilot: PilotEstimate,
    n: int,
    include_pilot_rows: bool = False,
) -> SubsamplePlan:
    """pi_i proportional to the per-row score norm at the pilot coefficients."""
    return _build_plan(model, dataset, pilot, n, GRADIENT_NORM, None, include_pilot_rows)


def unified_glm_probabilities(
    model: Family,
    dataset: Dataset,
    pilot: PilotEstimate,
    n: int,
    h_variant: str = H_XNORM,
    include_pilot_rows: bool = False,
) -> SubsamplePlan:
    """pi_i proportional to |y - mu~| |b'(x'beta~)| h(x) for scalar responses.

    ``h_variant``: ``"ones"`` gives the local case-control design,
    ``"xnorm"`` the L-optimal design and ``"aopt"`` the A-optimal design
    with the information matrix estimated from the pilot rows.
    """
    return _build_plan(model, dataset, pilot, n, UNIFIED, h_variant, include_pilot_rows)


def multiclass_probabilities(
    dataset: Dataset,
    pilot: PilotEstimate,
    n: int,
    include_pilot_rows: bool = False,
) -> SubsamplePlan:
    """pi_i proportional to ||y_onehot - p~(x)|| ||x|| for multinomial data."""
    if not isinstance(pilot.model, MultiLogistic):
        raise ValueError("multiclass_probabilities requires a MultiLogistic pilot")
    return _build_plan(
        pilot.model, dataset, pilot, n, MULTICLASS_LOPT, None, include_pilot_rows
    )


def uniform_probabilities(dataset: Dataset, n: int) -> SubsamplePlan:
    """Non-informative benchmark: every row gets min(1, n/N)."""
    if n < 1:
        raise ValueError("target average subsample size must be at least 1")
    p = min(1.0, n / dataset.n_rows)
    return SubsamplePlan(np.full(dataset.n_rows, p), int(n), UNIFORM, None)


def default_plan(
    model: Family,
    dataset: Dataset,
    pilot: PilotEstimate,
    n: int,
    sampling: str = "lopt",
    include_pilot_rows: bool = False,
) -> SubsamplePlan:
    """Map a CLI-style sampling name onto the matching plan constructor."""
    if sampling == "uniform":
        return uniform_probabilities(dataset, n)
    if sampling == "gradnorm":
        return gradient_norm_probabilities(model, dataset, pilot, n, include_pilot_rows)
    if isinstance(model, MultiLogistic):
        if sampling == "lopt":
            return multiclass_probabilities(dataset, pilot, n, include_pilot_rows)
        raise ValueError(f"sampling {sampling!r} is not defined for multiclass models")
    h_by_name = {"lcc": H_ONES, "lopt": H_XNORM, "aopt": H_AOPT}
    if sampling not in h_by_name:
        raise ValueError(f"unknown sampling design {sampling!r}")
    return unified_glm_probabilities(
        model, dataset, pilot, n, h_by_name[sampling], include_pilot_rows
    )


def draw_subsample(
    plan: SubsamplePlan,
    rng: np.random.Generator,
    seed_label: str | None = None,
) -> SubsampleDraw:
    """Independent Bernoulli(pi_i) inclusion per row."""
    u = rng.random(plan.probabilities.shape[0])
    indicators = (u < plan.probabilities).astype(np.uint8)
    return SubsampleDraw(indicators, int(indicators.sum()), seed_label)


def plan_draw_to_csv(
    path: str | Path,
    plan: SubsamplePlan,
    draw: SubsampleDraw | None = None,
) -> None:
    """Audit export: one row per data row with probability and indicator."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_index", "probability", "indicator"])
        indicators = draw.indicators if draw is not None else None
        for i, p in enumerate(plan.probabilities):
            flag = "" if indicators is None else int(indicators[i])
            writer.writerow([i, repr(float(p)), flag])


def plan_draw_from_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read back an audit export; returns (probabilities, indicators or None)."""
    path = Path(path)
    probs: list[float] = []
    flags: list[int] = []
    has_flags = True
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            probs.append(float(row[1]))
            if row[2] == "":
                has_flags = False
            else:
                flags.append(int(row[2]))
    indicators = np.asarray(flags, dtype=np.uint8) if has_flags else None
    return np.asarray(probs), indicators
