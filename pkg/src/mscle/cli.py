"""Command-line front end: fit, subsample, simulate, compare.

JSON is the canonical output format; CSV is a projection of the same
content.  Every output carries a metadata block (configuration echo,
seed, library versions) sufficient to re-run the command exactly.  On
failure the command prints a machine-readable error object and exits
nonzero.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .data import load_csv_dataset
from .errors import MscleError
from .families import CLOGLOG_LINK, PROBIT_LINK, BinaryLink, Logistic, MultiLogistic, Poisson
from .estimators import mscle_fit, naive_fit, weighted_fit
from .rng import substream
from .sampling import (
    default_plan,
    draw_subsample,
    misspecify_pilot,
    pilot_fit,
    plan_draw_to_csv,
    uniform_probabilities,
)
from .simulate import (
    PRESET_NAMES,
    ScenarioSpec,
    preset_scenario,
    resolve_workers,
    run_study,
)
from .variance import confidence_intervals, estimate_sigma_mscle, estimate_v_weighted

_LINKS = {"logit": None, "probit": PROBIT_LINK, "cloglog": CLOGLOG_LINK}


def _parse_family(text: str):
    """Family flag: logistic | binary:<link> | multiclass[:K] | poisson."""
    if text == "logistic":
        return Logistic()
    if text == "poisson":
        return Poisson()
    if text.startswith("binary:"):
        link = text.split(":", 1)[1]
        if link not in _LINKS:
            raise MscleError(f"unknown binary link {link!r}; choose from {sorted(_LINKS)}")
        return Logistic() if link == "logit" else BinaryLink(_LINKS[link])
    if text == "multiclass" or text.startswith("multiclass:"):
        if ":" in text:
            return MultiLogistic(int(text.split(":", 1)[1]))
        return "multiclass-infer"
    raise MscleError(f"unknown family {text!r}")


def _load(args):
    """Ingest the input CSV for the requested family."""
    family = _parse_family(args.family)
    add_intercept = not args.no_intercept
    if family == "multiclass-infer":
        dataset, meta = load_csv_dataset(
            args.input, args.response, model=None, add_intercept=add_intercept
        )
        k = np.unique(dataset.y).shape[0]
        family = MultiLogistic(k)
        dataset, meta = load_csv_dataset(
            args.input, args.response, model=family, add_intercept=add_intercept
        )
    else:
        dataset, meta = load_csv_dataset(
            args.input, args.response, model=family, add_intercept=add_intercept
        )
    if isinstance(family, MultiLogistic):
        meta["n_classes"] = family.n_classes
        meta["free_parameter_dim"] = family.n_params(dataset.n_features)
    return family, dataset, meta


def _metadata(args, seed: int) -> dict:
    config = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return {
        "config": config,
        "seed": int(seed),
        "versions": {
            "mscle": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    return int(np.random.SeedSequence().entropy % (2**63))


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out is None:
        print(text)
    else:
        Path(out).write_text(text + "\n")


def _fit_rows_csv(results: dict) -> str:
    lines = ["method,index,estimate,std_error,lower,upper"]
    for method, res in results.items():
        coef = res["coefficients"]
        ci = res.get("confidence_intervals")
        se = res.get("std_errors")
        for j, value in enumerate(coef):
            se_j = "" if se is None else repr(se[j])
            lo = "" if ci is None else repr(ci["lower"][j])
            hi = "" if ci is None else repr(ci["upper"][j])
            lines.append(f"{method},{j},{value!r},{se_j},{lo},{hi}")
    return "\n".join(lines) + "\n"


def _pipeline(args, family, dataset, seed):
    pilot = pilot_fit(
        family,
        dataset,
        args.pilot_size,
        substream(seed, "pilot"),
        method="multiclass" if isinstance(family, MultiLogistic) else "unified",
        h_variant=None if isinstance(family, MultiLogistic) else "xnorm",
    )
    if getattr(args, "pilot_misspecify", False):
        pilot = misspecify_pilot(pilot, substream(seed, "pilot-shift"))
    include_pilot = getattr(args, "pilot_overlap", False)
    plan = default_plan(
        family, dataset, pilot, args.n, args.sampling, include_pilot_rows=include_pilot
    )
    draw = draw_subsample(plan, substream(seed, "draw"))
    return pilot, plan, draw


def _one_result(method, family, dataset, plan, draw, pilot, level, seed):
    if method == "mscle":
        fit = mscle_fit(family, dataset, plan, draw, pilot)
    elif method == "weighted":
        fit = weighted_fit(family, dataset, plan, draw, init=pilot.beta_plt)
    elif method == "naive":
        fit = naive_fit(family, dataset, draw, init=pilot.beta_plt)
    elif method == "uniform":
        uplan = uniform_probabilities(dataset, plan.target_avg_size)
        udraw = draw_subsample(uplan, substream(seed, "uniform-draw"))
        plan, draw = uplan, udraw
        fit = naive_fit(family, dataset, udraw, init=pilot.beta_plt)
    else:
        raise MscleError(f"unknown method {method!r}")

    out = fit.to_dict()
    out["method"] = method
    out["n_selected"] = int(draw.realized_size)
    variance = None
    if fit.converged and method == "mscle":
        variance = estimate_sigma_mscle(family, dataset, plan, draw, pilot, fit.coefficients)
    elif fit.converged and method == "weighted":
        variance = estimate_v_weighted(family, dataset, plan, draw, fit.coefficients)
    if variance is not None:
        cov = variance.covariance
        ci = confidence_intervals(fit, variance, level)
        out["covariance"] = [[float(v) for v in row] for row in cov]
        out["std_errors"] = [float(v) for v in np.sqrt(np.diag(cov))]
        out["confidence_intervals"] = {
            "level": level,
            "lower": [float(v) for v in ci[:, 0]],
            "upper": [float(v) for v in ci[:, 1]],
        }
    return out


def _cmd_fit(args) -> int:
    family, dataset, meta = _load(args)
    seed = _resolve_seed(args)
    pilot, plan, draw = _pipeline(args, family, dataset, seed)
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    results = {
        m: _one_result(m, family, dataset, plan, draw, pilot, args.level, seed)
        for m in methods
    }
    payload = {
        "metadata": _metadata(args, seed),
        "data": meta,
        "pilot": {
            "coefficients": [float(v) for v in pilot.beta_plt],
            "normalizer": pilot.psi_plt,
            "size": pilot.pilot_size,
        },
        "plan": {
            "method": plan.method,
            "h_variant": plan.h_variant,
            "target_avg_size": plan.target_avg_size,
            "expected_size": plan.expected_size,
            "realized_size": int(draw.realized_size),
        },
        "results": results,
    }
    if args.format == "csv":
        text = _fit_rows_csv(results)
        if args.out is None:
            print(text, end="")
        else:
            Path(args.out).write_text(text)
            Path(str(args.out) + ".meta.json").write_text(
                json.dumps(payload["metadata"], indent=2) + "\n"
            )
    else:
        _emit(payload, args.out)
    return 0


def _cmd_subsample(args) -> int:
    family, dataset, meta = _load(args)
    seed = _resolve_seed(args)
    pilot, plan, draw = _pipeline(args, family, dataset, seed)
    out = Path(args.out)
    plan_draw_to_csv(out, plan, draw)
    sidecar = {
        "metadata": _metadata(args, seed),
        "data": meta,
        "plan": {
            "method": plan.method,
            "h_variant": plan.h_variant,
            "target_avg_size": plan.target_avg_size,
            "expected_size": plan.expected_size,
            "realized_size": int(draw.realized_size),
        },
    }
    Path(str(out) + ".meta.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return 0


def _cmd_compare(args) -> int:
    family, dataset, meta = _load(args)
    seed = _resolve_seed(args)
    pilot, plan, draw = _pipeline(args, family, dataset, seed)
    results = {
        m: _one_result(m, family, dataset, plan, draw, pilot, args.level, seed)
        for m in ("mscle", "weighted", "naive")
    }
    table = []
    for m, res in results.items():
        ci = res.get("confidence_intervals")
        half_width = None
        if ci is not None:
            half_width = float(
                np.mean((np.asarray(ci["upper"]) - np.asarray(ci["lower"])) / 2.0)
            )
        table.append(
            {
                "method": m,
                "converged": res["converged"],
                "coefficients": res["coefficients"],
                "mean_ci_half_width": half_width,
            }
        )
    payload = {
        "metadata": _metadata(args, seed),
        "data": meta,
        "plan": {
            "method": plan.method,
            "target_avg_size": plan.target_avg_size,
            "realized_size": int(draw.realized_size),
        },
        "results": results,
        "table": table,
    }
    if args.format == "csv":
        lines = ["method,converged,mean_ci_half_width"]
        for row in table:
            hw = "" if row["mean_ci_half_width"] is None else repr(row["mean_ci_half_width"])
            lines.append(f"{row['method']},{row['converged']},{hw}")
        text = "\n".join(lines) + "\n"
        if args.out is None:
            print(text, end="")
        else:
            Path(args.out).write_text(text)
    else:
        _emit(payload, args.out)
    return 0


def _scenario_from_config(path: str) -> ScenarioSpec:
    cfg = json.loads(Path(path).read_text())
    if "preset" in cfg:
        name = cfg.pop("preset")
        return preset_scenario(name, **_scenario_overrides(cfg))
    family = _parse_family(cfg.pop("family"))
    if family == "multiclass-infer":
        raise MscleError("config family 'multiclass' needs an explicit class count")
    beta_true = np.asarray(cfg.pop("beta_true"), dtype=float)
    law = cfg.pop("covariate_law")
    return ScenarioSpec(
        family=family, beta_true=beta_true, covariate_law=law, **_scenario_overrides(cfg)
    )


def _scenario_overrides(cfg: dict) -> dict:
    allowed = {
        "n_grid", "n_rows", "pilot_size", "replications", "law_rate",
        "misspecified_pilot", "methods", "sampling",
    }
    unknown = set(cfg) - allowed
    if unknown:
        raise MscleError(f"unknown scenario config keys {sorted(unknown)}")
    out = dict(cfg)
    if "n_grid" in out:
        out["n_grid"] = tuple(int(v) for v in out["n_grid"])
    if "methods" in out:
        out["methods"] = tuple(out["methods"])
    return out


def _cmd_simulate(args) -> int:
    if (args.preset is None) == (args.config is None):
        raise MscleError("simulate needs exactly one of --preset or --config")
    if args.preset is not None:
        overrides = {}
        if args.n_grid:
            overrides["n_grid"] = tuple(int(v) for v in args.n_grid.split(","))
        if args.replications is not None:
            overrides["replications"] = args.replications
        if args.pilot_size is not None:
            overrides["pilot_size"] = args.pilot_size
        if args.n_rows is not None:
            overrides["n_rows"] = args.n_rows
        if args.misspecify_pilot:
            overrides["misspecified_pilot"] = True
        if args.methods:
            overrides["methods"] = tuple(m.strip() for m in args.methods.split(","))
        spec = preset_scenario(args.preset, **overrides)
    else:
        spec = _scenario_from_config(args.config)

    result = run_study(spec, args.seed, workers=resolve_workers(args.workers))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = result.to_json_dict()
    payload["metadata"] = _metadata(args, args.seed)
    (out_dir / "study.json").write_text(json.dumps(payload, indent=2) + "\n")
    result.write_csv(out_dir / "study.csv")
    result.write_long_csv(out_dir / "study_long.csv")
    print(json.dumps({"written": str(out_dir), "cells": payload["cells"]}, indent=2))
    return 0


def _add_io_options(p: argparse.ArgumentParser):
    p.add_argument("--input", required=True, help="input CSV with a header row")
    p.add_argument("--response", required=True, help="name of the response column")
    p.add_argument("--family", required=True,
                   help="logistic | binary:<logit|probit|cloglog> | multiclass[:K] | poisson")
    p.add_argument("--no-intercept", action="store_true",
                   help="do not prepend an all-ones column")
    p.add_argument("--sampling", default="lopt",
                   choices=["gradnorm", "lcc", "lopt", "aopt", "uniform"])
    p.add_argument("--n", type=int, required=True, help="target average subsample size")
    p.add_argument("--pilot-size", type=int, default=400)
    p.add_argument("--pilot-misspecify", action="store_true",
                   help="shift each pilot coefficient by an independent U(1,2) draw")
    p.add_argument("--pilot-overlap", action="store_true",
                   help="keep pilot rows eligible for the main subsample")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--format", default="json", choices=["json", "csv"])
    p.add_argument("--level", type=float, default=0.95, help="confidence level")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mscle",
        description="Informative subsampling and efficient subsample estimation for GLMs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="pilot -> plan -> draw -> estimate on a CSV")
    _add_io_options(p_fit)
    p_fit.add_argument("--method", default="mscle",
                       help="comma list from mscle,weighted,naive,uniform")
    p_fit.set_defaults(func=_cmd_fit)

    p_sub = sub.add_parser("subsample", help="write the plan/draw audit CSV")
    _add_io_options(p_sub)
    p_sub.set_defaults(func=_cmd_subsample)

    p_cmp = sub.add_parser("compare", help="all estimators on one shared draw")
    _add_io_options(p_cmp)
    p_cmp.set_defaults(func=_cmd_compare)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo study")
    p_sim.add_argument("--preset", choices=list(PRESET_NAMES), default=None)
    p_sim.add_argument("--config", default=None, help="JSON scenario config")
    p_sim.add_argument("--n-grid", default=None, help="comma list of target sizes")
    p_sim.add_argument("--replications", type=int, default=None)
    p_sim.add_argument("--pilot-size", type=int, default=None)
    p_sim.add_argument("--n-rows", type=int, default=None)
    p_sim.add_argument("--methods", default=None, help="comma list of estimators")
    p_sim.add_argument("--misspecify-pilot", action="store_true")
    p_sim.add_argument("--workers", type=int, default=None,
                       help="parallel workers (default: MSCLE_THREADS or CPU count)")
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=_cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MscleError, OSError, ValueError) as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
