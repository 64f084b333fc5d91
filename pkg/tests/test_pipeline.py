import csv
import math

import numpy as np
import pytest

from globalzne.config import SamplePlan, SurfaceSpec, parse_pipeline, parse_scenario
from globalzne.errors import (
    BudgetExceededError,
    ConditioningError,
    DegenerateRatioError,
    InsufficientPointsError,
    UnsupportedVisualizationError,
)
from globalzne.extrapolate import richardson_coefficients
from globalzne.pipeline import (
    MINUTES_PER_YEAR,
    export_surface,
    overhead_report,
    run_hypersurface,
    run_zne,
    sample_rates,
)


def relaxation_scenario(rate, horizon=1.0):
    return parse_scenario({
        "qubits": 1,
        "horizon": horizon,
        "initial_state": "1",
        "noise": [{"site": 0, "kind": "relaxation", "rate": rate}],
        "observable": {"pauli": "Z"},
    })


T1T2 = {
    "qubits": 2,
    "horizon": 1.0,
    "initial_state": "+0",
    "hamiltonian": [
        {"duration": 0.5, "paulis": {"XI": 0.6, "IZ": 0.3}},
        {"duration": 0.5, "paulis": {"XX": 0.8, "ZI": -0.2}},
    ],
    "noise": [
        {"site": 0, "kind": "relaxation", "rate": 0.010},
        {"site": 0, "kind": "dephasing", "rate": 0.004},
        {"site": 1, "kind": "relaxation", "rate": 0.016},
        {"site": 1, "kind": "dephasing", "rate": 0.007},
    ],
    "observable": {"paulis": {"ZZ": 1.0, "XI": 0.5}},
}


def richardson(factors):
    return parse_pipeline({"method": "richardson", "factors": list(factors)})


def closed_form_z(rate, G, T=1.0):
    return 1 - 2 * math.exp(-G * rate * T)


# -- run_zne ----------------------------------------------------------------


def test_run_zne_two_point_closed_form():
    lam = 0.02
    report = run_zne(relaxation_scenario(lam), richardson([1, 2]))
    expected = 2 * closed_form_z(lam, 1) - closed_form_z(lam, 2)
    assert report["estimate"] == pytest.approx(expected, abs=1e-10)
    assert report["ideal"] == pytest.approx(-1.0, abs=1e-12)
    assert report["abs_bias"] == pytest.approx(abs(expected + 1), abs=1e-10)
    assert report["n_settings"] == 2
    assert report["coefficients"] == pytest.approx([2.0, -1.0])
    assert [p["G"] for p in report["points"]] == [1.0, 2.0]


@pytest.mark.parametrize(
    "pipeline",
    [
        {"method": "richardson", "factors": [1, 2, 3]},
        {"method": "polynomial", "factors": [1, 2, 3, 4], "order": 2},
        {"method": "exponential", "factors": [1, 2, 3]},
    ],
)
def test_noise_free_scenario_returns_ideal(pipeline):
    raw = dict(T1T2, noise=[])
    report = run_zne(parse_scenario(raw), parse_pipeline(pipeline))
    assert report["estimate"] == pytest.approx(report["ideal"], abs=1e-9)


def test_exponential_constant_data_still_rejected_at_fit_level():
    from globalzne.extrapolate import NoisyPoint, exponential_extrapolate

    with pytest.raises(DegenerateRatioError):
        exponential_extrapolate([NoisyPoint(g, 0.3) for g in (1, 2, 3)])


def test_t1t2_richardson_uses_four_settings():
    report = run_zne(parse_scenario(T1T2), richardson([1, 2, 3, 4]))
    assert report["n_settings"] == 4
    assert report["abs_bias"] < 1e-6
    assert report["weak_noise"]
    assert report["max_trace_drift"] < 1e-8


def test_exponential_pipeline_runs():
    report = run_zne(relaxation_scenario(0.05), parse_pipeline({"method": "exponential", "factors": [1, 2, 3]}))
    # relaxation is exactly exponential in G, so the fit is exact
    assert report["estimate"] == pytest.approx(-1.0, abs=1e-9)


def test_sampled_run_is_reproducible():
    spec = parse_pipeline({"method": "richardson", "factors": [1, 2, 3], "sampling": {"shots": 4000, "seed": 11}})
    a = run_zne(parse_scenario(T1T2), spec)
    b = run_zne(parse_scenario(T1T2), spec)
    assert a == b
    assert a["variance"] > 0
    assert a["sampling"]["rng"].startswith("numpy.random.PCG64")
    gamma = richardson_coefficients([1, 2, 3])
    assert a["variance"] == pytest.approx(sum(g**2 * p["stderr"] ** 2 for g, p in zip(gamma, a["points"])))


@pytest.mark.parametrize("n", [1, 2])
def test_bias_order_scaling(n):
    factors = list(range(1, n + 2))
    rates = [0.04, 0.02, 0.01, 0.005]
    biases = [run_zne(relaxation_scenario(r), richardson(factors))["abs_bias"] for r in rates]
    for big, small in zip(biases, biases[1:]):
        assert 2 ** (n + 1) / 1.5 <= big / small <= 2 ** (n + 1) * 1.5


# -- run_hypersurface --------------------------------------------------------


def hyper(count, seed=0):
    return parse_pipeline({"method": "hypersurface", "order": 2,
                           "samples": {"plan": "random", "count": count, "seed": seed}})


def test_hypersurface_recovers_ideal():
    report = run_hypersurface(parse_scenario(T1T2), hyper(15, seed=3))
    assert report["n_settings"] == 15
    assert report["overhead"] == {"noise_sources": 4, "basis_size": 15, "top_order_term": 10, "standard_zne": 3}
    assert report["abs_bias"] < 1e-5


def test_hypersurface_refuses_before_evolving(monkeypatch):
    import globalzne.pipeline as pl

    def boom(*a, **k):
        raise AssertionError("evolution must not run")

    monkeypatch.setattr(pl, "evolve_problem", boom)
    with pytest.raises(InsufficientPointsError) as err:
        run_hypersurface(parse_scenario(T1T2), hyper(10))
    assert "requires 15" in str(err.value)
    assert err.value.required == 15


def test_hypersurface_single_ray_conditioning_error():
    pipeline = parse_pipeline({"method": "hypersurface", "order": 2,
                               "samples": {"plan": "ray", "factors": list(range(1, 16))}})
    with pytest.raises(ConditioningError):
        run_hypersurface(parse_scenario(T1T2), pipeline)


def test_ray_restricted_hypersurface_matches_zne():
    factors = [1.0, 2.0, 3.0]
    zne = run_zne(parse_scenario(T1T2), richardson(factors))
    pipeline = parse_pipeline({"method": "hypersurface", "order": 2, "allow_rank_deficient": True,
                               "samples": {"plan": "ray", "factors": factors}})
    surf = run_hypersurface(parse_scenario(T1T2), pipeline)
    assert surf["estimate"] == pytest.approx(zne["estimate"], abs=1e-6)


def test_budget_refused():
    raw = dict(T1T2, qubits=5, initial_state="00000", hamiltonian=None,
               noise=[{"site": s, "kind": k, "rate": 0.01} for s in range(5) for k in ("relaxation", "dephasing")],
               observable={"pauli": "ZIIII"})
    pipeline = parse_pipeline({"method": "hypersurface", "order": 20, "samples": {"plan": "random", "count": 5}})
    with pytest.raises(BudgetExceededError):
        run_hypersurface(parse_scenario(raw), pipeline)


def test_sample_plans():
    base = np.array([0.1, 0.2])
    rnd = sample_rates(SamplePlan("random", count=50, low=0.5, high=1.5, seed=1), base)
    assert rnd.shape == (50, 2)
    assert np.all(rnd >= 0.5 * base) and np.all(rnd <= 1.5 * base)
    assert np.array_equal(rnd, sample_rates(SamplePlan("random", count=50, low=0.5, high=1.5, seed=1), base))
    assert np.allclose(sample_rates(SamplePlan("ray", factors=(1, 2)), base), [[0.1, 0.2], [0.2, 0.4]])
    assert sample_rates(SamplePlan("list", rates=((0.0, 1.0),)), base).tolist() == [[0.0, 1.0]]


# -- overhead ---------------------------------------------------------------


def test_overhead_report_reproduces_counts():
    rep = overhead_report(200, 3, 1.0, 1)
    assert rep["top_order"]["settings"] == 1353400
    assert rep["cumulative"]["settings"] == 1373701
    assert rep["standard_zne"]["settings"] == 4
    assert rep["top_order"]["minutes"] == 1353400
    assert rep["top_order"]["years"] == pytest.approx(1353400 / 525600)
    assert abs(rep["top_order"]["years"] - 2.57) <= 0.1
    assert MINUTES_PER_YEAR == 525600


def test_overhead_report_small_and_parallel():
    rep = overhead_report(1, 1, 5.0, 1)
    assert rep["cumulative"]["settings"] == 2
    assert rep["standard_zne"]["settings"] == 2
    rep = overhead_report(200, 3, 1.0, 10)
    assert rep["top_order"]["minutes"] == pytest.approx(135340.0)


# -- surface ----------------------------------------------------------------


SURFACE_SCENARIO = {
    "qubits": 1,
    "horizon": 1.0,
    "initial_state": "+",
    "noise": [{"site": 0, "kind": "relaxation", "rate": 0.05}, {"site": 0, "kind": "dephasing", "rate": 0.02}],
    "observable": {"pauli": "X"},
}


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_surface_grid_matches_closed_form(tmp_path):
    spec = SurfaceSpec((0.005, 0.2, 20), (0.005, 0.2, 20), ((0.02, 0.01),), (1.0, 2.0))
    export_surface(parse_scenario(SURFACE_SCENARIO), spec, tmp_path)
    rows = read_csv(tmp_path / "grid.csv")
    assert rows[0] == ["rate_1", "rate_2", "expectation"]
    assert len(rows) == 401
    for r1, r2, value in rows[1:]:
        # coherence decays at gamma/2 + 2*lambda
        expected = math.exp(-(float(r1) / 2 + 2 * float(r2)))
        assert abs(float(value) - expected) < 1e-6


def test_surface_zero_ray_is_flat(tmp_path):
    spec = SurfaceSpec((0.01, 0.02, 2), (0.01, 0.02, 2), ((0.0, 0.0),), (1.0, 2.0, 3.0))
    out = export_surface(parse_scenario(SURFACE_SCENARIO), spec, tmp_path)
    rows = read_csv(tmp_path / "ray_0.csv")[1:]
    assert all(float(r[3]) == pytest.approx(out["ideal"], abs=1e-12) for r in rows)


def test_surface_rays_converge(tmp_path):
    rays = ((0.08, 0.04), (0.04, 0.02), (0.02, 0.01))
    spec = SurfaceSpec((0.01, 0.1, 3), (0.01, 0.1, 3), rays, (1.0, 2.0, 3.0))
    out = export_surface(parse_scenario(SURFACE_SCENARIO), spec, tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["grid.csv", "intercepts.csv", "ray_0.csv", "ray_1.csv", "ray_2.csv"]
    biases = [i["abs_bias"] for i in out["intercepts"]]
    assert biases[0] > biases[1] > biases[2]
    assert len(read_csv(tmp_path / "intercepts.csv")) == 4


def test_surface_requires_two_rates(tmp_path):
    raw = dict(SURFACE_SCENARIO, noise=SURFACE_SCENARIO["noise"] + [{"site": 0, "kind": "dephasing", "rate": 0.01}])
    spec = SurfaceSpec((0.01, 0.02, 2), (0.01, 0.02, 2), ((0.01, 0.01),), (1.0, 2.0))
    with pytest.raises(UnsupportedVisualizationError):
        export_surface(parse_scenario(raw), spec, tmp_path)


def test_surface_byte_identical(tmp_path):
    spec = SurfaceSpec((0.01, 0.05, 4), (0.01, 0.05, 3), ((0.03, 0.01), (0.01, 0.0)), (1.0, 1.5, 2.0))
    export_surface(parse_scenario(SURFACE_SCENARIO), spec, tmp_path / "a")
    export_surface(parse_scenario(SURFACE_SCENARIO), spec, tmp_path / "b")
    for name in ("grid.csv", "ray_0.csv", "ray_1.csv", "intercepts.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_csv_floats_round_trip(tmp_path):
    spec = SurfaceSpec((0.01, 0.05, 2), (0.01, 0.05, 2), ((0.03, 0.01),), (1.0, 2.0))
    out = export_surface(parse_scenario(SURFACE_SCENARIO), spec, tmp_path)
    row = read_csv(tmp_path / "intercepts.csv")[1]
    assert float(row[3]) == out["intercepts"][0]["estimate"]
    assert len(row[3].replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 17
