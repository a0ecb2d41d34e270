"""Experiment protocols behind `quantile-atlas run`.

Each protocol turns a validated `ExperimentConfig` into named tables. Random
streams come from `task.derive_seed(master, name, index)` so tables do not
depend on the number of workers.
"""

from __future__ import annotations

import functools
import logging
from typing import TYPE_CHECKING, Any

import numpy as np

from . import forest, locstat, metrics, report, task, transport
from .errors import ValidationError
from .weights import KernelWeighting, KnnWeighting

if TYPE_CHECKING:
    from collections.abc import Callable
    from pathlib import Path

    from numpy.typing import ArrayLike, NDArray

    from .config import ExperimentConfig
    from .weights import Weighting

log = logging.getLogger("experiments")

type Runner = Callable[[ExperimentConfig, report.PhaseTimer], list[report.Table]]

TUBE_RANGE = (-0.9, 0.9)
TUBE_FILL = 0.5


def make_weighting(
    method: str,
    covariates: ArrayLike,
    responses: ArrayLike,
    *,
    bandwidth: float = 0.1,
    k: int = 50,
    forest_params: forest.ForestParams | None = None,
    seed: int = 0,
    workers: int = 1,
) -> Weighting:
    """Bind a weight method to a training sample, fitting a forest if needed."""
    x = np.asarray(covariates, dtype=float)
    match method:
        case "kernel":
            return KernelWeighting(x, bandwidth)
        case "knn":
            return KnnWeighting(x, k)
        case "forest":
            params = forest_params or forest.ForestParams()
            model = forest.fit_forest(x, responses, params, seed, workers=workers)
            return forest.ForestWeighting(model)
        case _:
            raise ValidationError(f"Unknown weight method: {method}")


def _constant(theta: NDArray[np.float64]) -> Callable[[float], NDArray[np.float64]]:
    return lambda _u: theta


def _coefficient_names(p: int) -> list[str]:
    return ["alpha", *(f"phi{j}" for j in range(1, p + 1))]


# --- locally stationary autoregressions ---


def motivating(cfg: ExperimentConfig, timer: report.PhaseTimer) -> list[report.Table]:
    """True against estimated conditional quantiles, constant and local fits."""
    n, taus, b = cfg.get("n"), cfg.get("tau"), cfg.get("b_n")
    grid = locstat.u_grid(cfg.get("grid_points"))
    cases = [(run, case) for run in range(cfg.get("runs")) for case in (True, False)]

    def one(item: tuple[int, bool]) -> dict[str, list[dict[str, Any]]]:
        run, stationary = item
        case = "stationary" if stationary else "nonstationary"
        spec = locstat.motivating_spec(n, stationary=stationary)
        seed = task.derive_seed(cfg.seed, f"motivating:{case}", run)
        series = locstat.simulate_tvar(spec, seed)
        out: dict[str, list[dict[str, Any]]] = {"scatter": [], "stats": [], "fit": []}

        for tau in taus:
            truth_fn = functools.partial(spec.theta, tau=tau)
            truth = locstat.conditional_quantile_path(series, truth_fn, tau)
            constant = locstat.constant_fit(series, tau)
            local = locstat.fit_curve(series, grid, tau=tau, k=0, bandwidth=b)
            estimates = {
                "constant": locstat.conditional_quantile_path(
                    series, _constant(constant.theta), tau
                ),
                "local": locstat.conditional_quantile_path(
                    series, locstat.theta_interpolator(local), tau
                ),
            }
            key = {"run": run, "case": case, "tau": tau}
            out["fit"].append(
                key | dict(zip(_coefficient_names(1), constant.theta, strict=True))
            )
            for estimator, estimate in estimates.items():
                stats = metrics.quantile_scatter_stats(truth, estimate)
                out["stats"].append(
                    key
                    | {
                        "estimator": estimator,
                        "rmse": stats.rmse,
                        "bias": stats.bias,
                        "correlation": stats.correlation,
                    }
                )
                out["scatter"].extend(
                    key | {"estimator": estimator, "i": i + 1, "true_q": t, "est_q": e}
                    for i, (t, e) in enumerate(zip(truth, estimate, strict=True))
                )
        return out

    with timer.phase("fit"):
        results = task.run_tasks(one, cases, workers=cfg.get("workers"))
    return [
        report.Table.from_records(name, [r for res in results for r in res[part]])
        for name, part in (
            ("constant_fit", "fit"),
            ("scatter_stats", "stats"),
            ("scatter", "scatter"),
        )
    ]


def locstat_mc(cfg: ExperimentConfig, timer: report.PhaseTimer) -> list[report.Table]:
    """Local constant, linear and quadratic fits of the AR(3) process."""
    taus, ks, b = cfg.get("tau"), cfg.get("k"), cfg.get("b_n")
    grid = locstat.u_grid(cfg.get("grid_points"))
    spec = locstat.ar3_spec(cfg.get("n"))
    names = _coefficient_names(spec.p)

    def one(run: int) -> dict[tuple[float, int], list[locstat.LocalPolyFit]]:
        series = locstat.simulate_tvar(
            spec, task.derive_seed(cfg.seed, "locstat-mc", run)
        )
        return {
            (tau, k): locstat.fit_curve(series, grid, tau=tau, k=k, bandwidth=b)
            for tau in taus
            for k in ks
        }

    with timer.phase("fit"):
        runs = range(cfg.get("runs"))
        results = task.run_tasks(one, runs, workers=cfg.get("workers"))

    fit_rows = [
        {
            "run": run,
            "tau": tau,
            "k": k,
            "u": fit.u,
            "effective_n": fit.effective_n,
            "boundary": fit.boundary,
        }
        | dict(zip(names, fit.theta, strict=True))
        for run, curves in enumerate(results)
        for (tau, k), fits in curves.items()
        for fit in fits
    ]

    mse_rows = []
    with timer.phase("mse"):
        for tau in taus:
            for k in ks:
                curve = locstat.mse_curve(
                    [run_fits[tau, k] for run_fits in results],
                    functools.partial(spec.theta, tau=tau),
                )
                for u, per_coef, total in zip(
                    curve.u, curve.per_coefficient, curve.aggregate, strict=True
                ):
                    row = {"tau": tau, "k": k, "u": float(u)}
                    for name, value in zip(names, per_coef, strict=True):
                        row[f"mse_{name}"] = float(value)
                    row["mse_mean"] = float(total)
                    mse_rows.append(row)
    return [
        report.Table.from_records("fits", fit_rows),
        report.Table.from_records("mse", mse_rows),
    ]


# --- center-outward quantiles ---


def _grid_spec(cfg: ExperimentConfig) -> transport.GridSpec:
    return transport.GridSpec(2, cfg.get("N_R"), cfg.get("N_S"), cfg.get("N_0"))


def _weightings(
    cfg: ExperimentConfig,
    covariates: NDArray[np.float64],
    responses: NDArray[np.float64],
    seed: int,
    timer: report.PhaseTimer,
) -> dict[str, Weighting]:
    """Every configured weight method on one training sample."""
    m = covariates.shape[1]
    params = forest.ForestParams(
        n_trees=cfg.get("B"),
        min_leaf=cfg.get("min_leaf"),
        mtry=min(cfg.get("mtry"), m) or None,
    )
    out = {}
    for method in cfg.get("methods"):
        with timer.phase("forest-train" if method == "forest" else "setup"):
            out[method] = make_weighting(
                method,
                covariates,
                responses,
                bandwidth=cfg.get("b_n"),
                k=cfg.get("k_nn"),
                forest_params=params,
                seed=task.derive_seed(seed, "forest", 0),
                workers=cfg.get("workers"),
            )
    return out


def tube_points(m: int, n_x: int) -> list[NDArray[np.float64]]:
    """Conditioning points (x1, 0.5, ..., 0.5) with x1 spread over [-0.9, 0.9]."""
    return [
        np.concatenate([[x1], np.full(m - 1, TUBE_FILL)])
        for x1 in np.linspace(*TUBE_RANGE, n_x)
    ]


def ot_contour(cfg: ExperimentConfig, timer: report.PhaseTimer) -> list[report.Table]:
    """Atlas and contour errors at one conditioning point."""
    m, n, taus = cfg.get("m"), cfg.get("n"), cfg.get("tau")
    x = np.asarray(cfg.get("x"), dtype=float)
    grid = transport.build_grid(_grid_spec(cfg), cfg.seed)
    radius = {tau: metrics.population_radius(tau, x) for tau in taus}

    atlas_rows, error_rows = [], []
    for run in range(cfg.get("runs")):
        seed = task.derive_seed(cfg.seed, "ot-contour", run)
        covariates, responses = metrics.simulate_dgp15(metrics.DGPSpec15(m, n, seed))
        weightings = _weightings(cfg, covariates, responses, seed, timer)
        for method, weighting in weightings.items():
            with timer.phase("query"):
                atlas = transport.quantile_atlas(grid, responses, weighting(x))
            key = {"run": run, "method": method}
            atlas_rows.extend(key | r for r in transport.atlas_records(atlas))
            for tau in taus:
                j = transport.level_index(tau, grid.spec.n_r)
                points = transport.contour(atlas, j)
                evaluation = metrics.ContourEval(points, radius[tau], tau)
                error_rows.append(
                    key
                    | {
                        "tau": tau,
                        "population_radius": radius[tau],
                        "msrec": metrics.msrec(evaluation),
                    }
                )
    return [
        report.Table.from_records("atlas", atlas_rows),
        report.Table.from_records("msrec", error_rows),
    ]


def _tubes(
    cfg: ExperimentConfig,
    m: int,
    n: int,
    seed: int,
    timer: report.PhaseTimer,
) -> dict[str, transport.Tube]:
    covariates, responses = metrics.simulate_dgp15(metrics.DGPSpec15(m, n, seed))
    x_list = tube_points(m, cfg.get("n_x"))
    tubes = {}
    weightings = _weightings(cfg, covariates, responses, seed, timer)
    for method, weighting in weightings.items():
        with timer.phase("query"):
            tubes[method] = transport.quantile_tube(
                x_list,
                weighting,
                _grid_spec(cfg),
                cfg.get("tau"),
                responses,
                seed=seed,
                workers=cfg.get("workers"),
            )
    return tubes


def ot_tube(cfg: ExperimentConfig, timer: report.PhaseTimer) -> list[report.Table]:
    """Regression quantile tubes along the first covariate."""
    m, n, taus = cfg.get("m"), cfg.get("n"), cfg.get("tau")
    point_rows, error_rows = [], []
    for run in range(cfg.get("runs")):
        seed = task.derive_seed(cfg.seed, "ot-tube", run)
        for method, tube in _tubes(cfg, m, n, seed, timer).items():
            key = {"run": run, "method": method}
            for tau in taus:
                point_rows.extend(
                    key | {"tau": tau, "x1": x1, "y1": y1, "y2": y2}
                    for x1, y1, y2 in tube.project(tau).tolist()
                )
                error_rows.append(
                    key | {"tau": tau, "msret": metrics.tube_msret(tube, tau)}
                )
    return [
        report.Table.from_records("tube", point_rows),
        report.Table.from_records("msret", error_rows),
    ]


def ot_tables(cfg: ExperimentConfig, timer: report.PhaseTimer) -> list[report.Table]:
    """Tube errors over (method, m, n, tau)."""
    rows = []
    for m in cfg.get("m"):
        for n in cfg.get("n"):
            for run in range(cfg.get("runs")):
                seed = task.derive_seed(cfg.seed, f"ot-tables:m={m}:n={n}", run)
                log.info("ot-tables cell m=%d n=%d run %d", m, n, run)
                for method, tube in _tubes(cfg, m, n, seed, timer).items():
                    rows.extend(
                        {
                            "method": method,
                            "m": m,
                            "n": n,
                            "tau": tau,
                            "seed": seed,
                            "msret": metrics.tube_msret(tube, tau),
                        }
                        for tau in cfg.get("tau")
                    )
    return [report.Table.from_records("msret", rows)]


PROTOCOLS: dict[str, Runner] = {
    "motivating": motivating,
    "locstat-mc": locstat_mc,
    "ot-contour": ot_contour,
    "ot-tube": ot_tube,
    "ot-tables": ot_tables,
}


def run_experiment(cfg: ExperimentConfig) -> list[Path]:
    """Run a protocol, write its tables and manifest, and return the paths.

    On any failure the files written so far are removed.
    """
    output = report.Output(cfg.output_dir, report.get_reporter(cfg.format))
    timer = report.PhaseTimer()
    log.info("Running %s with seed %d", cfg.experiment, cfg.seed)
    try:
        with timer.phase("compute"):
            tables = PROTOCOLS[cfg.experiment](cfg, timer)
        with timer.phase("write"):
            for table in tables:
                output.write_table(table)
        output.write_manifest(cfg.echo(), timer.phases)
    except BaseException:
        output.discard()
        raise

    for name, seconds in timer.phases.items():
        log.info("%-14s %8.2fs", name, seconds)
    return list(output.created)
