"""End-to-end protocols: standard ZNE, hypersurface fitting, overhead and surface export.

Reports are plain dicts so they serialise straight to JSON. Each one
carries the ideal (noise-free) value, the estimate, the absolute bias,
the method and the number of noise settings used.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .amplify import scale_rates
from .config import PipelineSpec, Scenario, SamplePlan, SurfaceSpec
from .core import expectation
from .errors import ConfigError, InsufficientPointsError, UnsupportedVisualizationError
from .extrapolate import (
    EXPONENTIAL,
    POLYNOMIAL,
    RICHARDSON,
    ExtrapolationResult,
    HypersurfaceSample,
    NoisyPoint,
    exponential_extrapolate,
    hypersurface_fit,
    monomial_basis,
    overhead_count,
    polynomial_extrapolate,
    richardson_extrapolate,
)
from .lindblad import EvolutionConfig, LindbladProblem, evolve_problem
from .sampling import RNG_ALGORITHM, ShotConfig, make_rng, measure

MINUTES_PER_YEAR = 365 * 24 * 60


def fmt(x: float) -> str:
    """17 significant digits: round-trips every double."""
    return format(float(x), ".17g")


def _integrator_info(config: EvolutionConfig) -> dict:
    return {"method": config.method, "step": config.step, "tolerance": config.tolerance}


def _observe(problem: LindbladProblem, config: EvolutionConfig, shots: ShotConfig | None):
    result = evolve_problem(problem, config)
    exact = expectation(problem.observable, result.final_state)
    if shots is None:
        return exact, 0.0, result
    est = measure(problem.observable, result.final_state, shots)
    return est.mean, est.stderr, result


def ideal_value(problem: LindbladProblem, config: EvolutionConfig | None = None) -> float:
    result = evolve_problem(problem.noiseless(), config)
    return expectation(problem.observable, result.final_state)


def _sampling_info(shots: ShotConfig | None) -> dict | None:
    if shots is None:
        return None
    return {"shots": shots.shots, "seed": shots.seed, "rng": RNG_ALGORITHM}


def extrapolate_points(points: Sequence[NoisyPoint], method: str, order: int):
    if method == RICHARDSON:
        return richardson_extrapolate(points)
    if method == POLYNOMIAL:
        return polynomial_extrapolate(points, order)
    if method == EXPONENTIAL:
        return exponential_extrapolate(points)
    raise ConfigError(f"{method!r} is not a univariate extrapolation method")


def run_zne(scenario: Scenario | LindbladProblem, pipeline: PipelineSpec) -> dict:
    """Amplify every rate by each G_j, measure, and extrapolate to G = 0."""
    problem = scenario.problem if isinstance(scenario, Scenario) else scenario
    config = pipeline.integrator
    ideal = ideal_value(problem, config)
    points = []
    max_drift = 0.0
    for j, G in enumerate(pipeline.factors):
        shots = pipeline.sampling.for_task(j) if pipeline.sampling else None
        value, stderr, result = _observe(problem.with_noise(scale_rates(problem.noise, G)), config, shots)
        max_drift = max(max_drift, result.trace_drift)
        points.append(NoisyPoint(G, value, stderr))
    values = [p.value for p in points]
    degenerate = pipeline.method == EXPONENTIAL and min(values) == max(values)
    if degenerate:
        # identical data: the constant model is exact and the decay ratio is undefined
        fit = ExtrapolationResult(values[0], np.array([values[0], 0.0, 0.0]), 0.0, EXPONENTIAL)
    else:
        fit = extrapolate_points(points, pipeline.method, pipeline.order)
    return {
        "method": pipeline.method,
        "degenerate": degenerate,
        "order": pipeline.order,
        "estimate": fit.estimate,
        "ideal": ideal,
        "bias": fit.estimate - ideal,
        "abs_bias": abs(fit.estimate - ideal),
        "variance": fit.variance,
        "n_settings": len(points),
        "points": [{"G": p.G, "value": p.value, "stderr": p.stderr} for p in points],
        "coefficients": fit.coefficients.tolist(),
        "condition": fit.condition,
        "residual_norm": fit.residual_norm,
        "base_rates": problem.noise.rates.tolist(),
        "weak_noise": not problem.noise.weak_noise_violations(max(pipeline.factors) * problem.horizon),
        "max_trace_drift": max_drift,
        "integrator": _integrator_info(config),
        "sampling": _sampling_info(pipeline.sampling),
    }


def sample_rates(plan: SamplePlan, base_rates: np.ndarray) -> np.ndarray:
    """Rate vectors requested by a hypersurface sample plan, one per row."""
    N = base_rates.size
    if plan.kind == "random":
        # each rate drawn uniformly in [low, high] times its base value
        u = make_rng(plan.seed).uniform(plan.low, plan.high, size=(plan.count, N))
        return u * base_rates
    if plan.kind == "ray":
        return np.outer(plan.factors, base_rates)
    rates = np.array(plan.rates, dtype=float).reshape(len(plan.rates), -1)
    if rates.shape[1] != N:
        raise ConfigError(f"pipeline.samples.rates: expected vectors of length {N}, got {rates.shape[1]}")
    if np.any(rates < 0):
        raise ConfigError("pipeline.samples.rates: rates must be >= 0")
    return rates


def run_hypersurface(scenario: Scenario | LindbladProblem, pipeline: PipelineSpec) -> dict:
    """Fit the truncated multinomial over the full rate vector and report its intercept.

    The sample count is checked against the basis size before any evolution
    is run.
    """
    problem = scenario.problem if isinstance(scenario, Scenario) else scenario
    config = pipeline.integrator
    N = len(problem.noise)
    if N == 0:
        raise ConfigError("hypersurface fitting needs at least one noise term")
    count = overhead_count(N, pipeline.order)
    monomial_basis(N, pipeline.order)  # refuse oversized bases up front
    rates = sample_rates(pipeline.samples, problem.noise.rates)
    if not pipeline.allow_rank_deficient and rates.shape[0] < count.cumulative:
        raise InsufficientPointsError(
            f"order-{pipeline.order} hypersurface with N={N} noise rates requires "
            f"{count.cumulative} samples, plan provides {rates.shape[0]}",
            required=count.cumulative,
        )
    ideal = ideal_value(problem, config)
    samples = []
    for m, row in enumerate(rates):
        shots = pipeline.sampling.for_task(m) if pipeline.sampling else None
        value, stderr, _ = _observe(problem.with_rates(row), config, shots)
        samples.append(HypersurfaceSample(tuple(row), value, stderr))
    fit = hypersurface_fit(samples, pipeline.order, allow_rank_deficient=pipeline.allow_rank_deficient)
    return {
        "method": "hypersurface",
        "order": pipeline.order,
        "estimate": fit.estimate,
        "ideal": ideal,
        "bias": fit.estimate - ideal,
        "abs_bias": abs(fit.estimate - ideal),
        "variance": fit.variance,
        "n_settings": len(samples),
        "samples": [{"rates": list(s.rates), "value": s.value, "stderr": s.stderr} for s in samples],
        "coefficients": fit.coefficients.tolist(),
        "condition": fit.condition,
        "rank": fit.rank,
        "residual_norm": fit.residual_norm,
        "overhead": {
            "noise_sources": N,
            "basis_size": count.cumulative,
            "top_order_term": count.top_order_term,
            "standard_zne": pipeline.order + 1,
        },
        "integrator": _integrator_info(config),
        "sampling": _sampling_info(pipeline.sampling),
    }


def overhead_report(N: int, n: int, stability_minutes: float = 1.0, settings_per_period: int = 1) -> dict:
    """Settings needed by the hypersurface fit versus standard ZNE, and the wall-clock cost.

    One stability period of ``stability_minutes`` yields ``settings_per_period``
    distinct noise settings.
    """
    if stability_minutes <= 0 or settings_per_period < 1:
        raise ConfigError("stability_minutes and settings_per_period must be positive")
    count = overhead_count(N, n)
    minutes_per_setting = stability_minutes / settings_per_period

    def cost(k: int) -> dict:
        minutes = k * minutes_per_setting
        return {"settings": k, "minutes": minutes, "years": minutes / MINUTES_PER_YEAR}

    return {
        "noise_sources": N,
        "order": n,
        "per_order": list(count.per_order),
        "stability_minutes": stability_minutes,
        "settings_per_period": settings_per_period,
        "top_order": cost(count.top_order_term),
        "cumulative": cost(count.cumulative),
        "standard_zne": cost(n + 1),
    }


def format_overhead(report: dict) -> str:
    lines = [f"N = {report['noise_sources']} noise sources, truncation order n = {report['order']}"]
    for key, name in (("top_order", "order-n term"), ("cumulative", "hypersurface (all orders)"),
                      ("standard_zne", "standard ZNE")):
        c = report[key]
        lines.append(f"  {name:<26} {c['settings']:>12,d} settings  {c['minutes']:>14,.0f} min  {c['years']:.3g} yr")
    return "\n".join(lines)


# -- CSV ---------------------------------------------------------------------


def write_csv(path: Path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_report(report: dict, out: Path) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.json"]
    paths[0].write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if "points" in report:
        paths.append(write_csv(out / "points.csv", ["G", "value", "stderr"],
                               ([p["G"], p["value"], p["stderr"]] for p in report["points"])))
    if "samples" in report:
        N = len(report["samples"][0]["rates"]) if report["samples"] else 0
        header = [f"rate_{k + 1}" for k in range(N)] + ["value", "stderr"]
        paths.append(write_csv(out / "samples.csv", header,
                               ([*s["rates"], s["value"], s["stderr"]] for s in report["samples"])))
    return paths


def export_surface(
    scenario: Scenario | LindbladProblem,
    surface: SurfaceSpec,
    out: str | Path,
    config: EvolutionConfig | None = None,
) -> dict:
    """Write the expectation surface over two rates and its one-parameter rays.

    Files written to ``out``:

    ``grid.csv``
        ``rate_1, rate_2, expectation`` over the rectangular grid.
    ``ray_<k>.csv``
        ``G, rate_1, rate_2, expectation`` along ``G * rays[k]``.
    ``intercepts.csv``
        ``ray, base_rate_1, base_rate_2, estimate, ideal, abs_bias``: the
        Richardson estimate from each ray.
    """
    problem = scenario.problem if isinstance(scenario, Scenario) else scenario
    if len(problem.noise) != 2:
        raise UnsupportedVisualizationError(
            f"surface export needs exactly 2 noise rates, scenario has {len(problem.noise)}"
        )
    config = config or EvolutionConfig()
    out = Path(out)

    def value(rates) -> float:
        res = evolve_problem(problem.with_rates(rates), config)
        return expectation(problem.observable, res.final_state)

    ideal = ideal_value(problem, config)
    axis1 = np.linspace(surface.rate_1[0], surface.rate_1[1], surface.rate_1[2])
    axis2 = np.linspace(surface.rate_2[0], surface.rate_2[1], surface.rate_2[2])
    grid_rows = [(float(a), float(b), value((a, b))) for a in axis1 for b in axis2]
    files = {"grid": write_csv(out / "grid.csv", ["rate_1", "rate_2", "expectation"], grid_rows)}

    intercepts = []
    for k, base in enumerate(surface.rays):
        base = np.asarray(base, dtype=float)
        traj = []
        for G in surface.factors:
            r = G * base
            traj.append((float(G), float(r[0]), float(r[1]), value(r)))
        files[f"ray_{k}"] = write_csv(out / f"ray_{k}.csv", ["G", "rate_1", "rate_2", "expectation"], traj)
        fit = richardson_extrapolate([NoisyPoint(G, v) for G, _, _, v in traj])
        intercepts.append((k, float(base[0]), float(base[1]), fit.estimate, ideal, abs(fit.estimate - ideal)))
    files["intercepts"] = write_csv(
        out / "intercepts.csv",
        ["ray", "base_rate_1", "base_rate_2", "estimate", "ideal", "abs_bias"],
        intercepts,
    )
    return {
        "files": {k: str(v) for k, v in files.items()},
        "ideal": ideal,
        "grid_points": len(grid_rows),
        "intercepts": [
            {"ray": k, "base_rates": [a, b], "estimate": e, "abs_bias": bias}
            for k, a, b, e, _, bias in intercepts
        ],
    }

