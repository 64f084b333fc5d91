import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from globalzne.core import (
    DensityMatrix,
    NoiseModel,
    Observable,
    X,
    Z,
    dephasing_jump,
    expectation,
    relaxation_jump,
)
from globalzne.errors import ConfigError, IntegrationDivergedError
from globalzne.lindblad import (
    EvolutionConfig,
    HamiltonianSchedule,
    LindbladProblem,
    evolve,
    expectation_at_rates,
    liouvillian,
    rhs,
)

from conftest import random_density, random_hermitian

PLUS = DensityMatrix.from_ket([1, 1])
ONE = DensityMatrix.basis("1")


def idle(q, T):
    return HamiltonianSchedule.idle(2**q, T)


def noise(*pairs):
    return NoiseModel.from_pairs(pairs)


def classical_rk4(rho, H, nm, step):
    """Textbook RK4 on the matrix-form right-hand side, segment by segment."""
    r = np.array(rho, dtype=complex)
    t0 = 0.0
    for duration, _ in H.segments:
        n = int(np.ceil(duration / step * (1 - 1e-12)))
        h = duration / n
        mid = t0 + duration / 2  # any time inside the segment picks its generator
        f = lambda x: rhs(mid, x, H, nm)
        for _ in range(n):
            k1 = f(r)
            k2 = f(r + h / 2 * k1)
            k3 = f(r + h / 2 * k2)
            k4 = f(r + h * k3)
            r = r + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t0 += duration
    return r


# -- rhs --------------------------------------------------------------------


def test_rhs_no_dynamics(rng):
    rho = random_density(rng, 4)
    assert np.array_equal(rhs(0.3, rho, idle(2, 1.0), NoiseModel()), np.zeros((4, 4)))


def test_rhs_dephasing_plus_state():
    lam = 0.07
    out = rhs(0.0, PLUS, idle(1, 1.0), noise((dephasing_jump(0, 1), lam)))
    assert np.allclose(np.diag(out), 0, atol=1e-15)
    assert out[0, 1] == pytest.approx(-2 * lam * 0.5)
    assert out[1, 0] == pytest.approx(-2 * lam * 0.5)


def test_rhs_commutator_plus_state():
    omega = 1.3
    H = HamiltonianSchedule.constant(omega * Z / 2, 1.0)
    out = rhs(0.5, PLUS, H, NoiseModel())
    # -i[wZ/2, |+><+|] = -i w/2 [[0, 1], [-1, 0]]
    expected = -1j * omega / 2 * np.array([[0, 1], [-1, 0]])
    assert np.allclose(out, expected, atol=1e-15)
    assert np.allclose(np.diag(out), 0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), q=st.integers(1, 3))
def test_liouvillian_matches_rhs(seed, q):
    rng = np.random.default_rng(seed)
    dim = 2**q
    H = random_hermitian(rng, dim)
    nm = noise(*[(relaxation_jump(s, q), rng.uniform(0, 1)) for s in range(q)],
               *[(dephasing_jump(s, q), rng.uniform(0, 1)) for s in range(q)])
    rho = random_density(rng, dim)
    sched = HamiltonianSchedule.constant(H, 1.0)
    direct = rhs(0.2, rho, sched, nm)
    via_super = (liouvillian(H, nm) @ rho.reshape(-1)).reshape(dim, dim)
    assert np.allclose(direct, via_super, atol=1e-12)
    assert abs(np.trace(direct)) < 1e-12


def test_schedule_generator_lookup():
    H = HamiltonianSchedule(((1.0, Z), (2.0, X)))
    assert H.total_time == 3.0
    assert np.array_equal(H.generator_at(0.5), Z)
    assert np.array_equal(H.generator_at(1.0), X)
    assert np.array_equal(H.generator_at(3.0), X)
    with pytest.raises(ValueError):
        H.generator_at(3.5)


@pytest.mark.parametrize(
    "segments",
    [(), ((0.0, Z),), ((-1.0, Z),), ((1.0, np.array([[0, 1], [0, 0]])),), ((1.0, Z), (1.0, np.eye(4)))],
)
def test_schedule_validation(segments):
    with pytest.raises(ConfigError):
        HamiltonianSchedule(segments)


def test_config_validation():
    with pytest.raises(ConfigError):
        EvolutionConfig("rk4_fixed", tolerance=1e-8)
    with pytest.raises(ConfigError):
        EvolutionConfig("rk45_adaptive", step=0.1)
    with pytest.raises(ConfigError):
        EvolutionConfig("euler")
    with pytest.raises(ConfigError):
        EvolutionConfig.rk4(step=-1.0)


# -- evolve -----------------------------------------------------------------


@pytest.mark.parametrize("lam,T", [(0.01, 1.0), (0.3, 2.0), (1.0, 0.5)])
def test_relaxation_closed_form(lam, T):
    res = evolve(ONE, idle(1, T), noise((relaxation_jump(0, 1), lam)))
    assert expectation(Observable(Z), res.final_state) == pytest.approx(1 - 2 * np.exp(-lam * T), abs=1e-6)
    assert res.trace_drift < 1e-8
    assert res.hermiticity_drift < 1e-8
    assert res.steps_taken == 2000


@pytest.mark.parametrize("lam,T", [(0.01, 1.0), (0.3, 2.0), (1.0, 0.5)])
def test_dephasing_closed_form(lam, T):
    res = evolve(PLUS, idle(1, T), noise((dephasing_jump(0, 1), lam)))
    assert expectation(Observable(X), res.final_state) == pytest.approx(np.exp(-2 * lam * T), abs=1e-6)


@pytest.mark.parametrize("method", [EvolutionConfig.rk4(), EvolutionConfig.rk45(1e-10)])
def test_identity_evolution(rng, method):
    rho = DensityMatrix(random_density(rng, 4))
    res = evolve(rho, idle(2, 3.0), NoiseModel(), method)
    assert np.max(np.abs(res.final_state.matrix - rho.matrix)) < 1e-10


def test_rk45_meets_closed_form():
    res = evolve(ONE, idle(1, 2.0), noise((relaxation_jump(0, 1), 0.4)), EvolutionConfig.rk45(1e-10))
    assert expectation(Observable(Z), res.final_state) == pytest.approx(1 - 2 * np.exp(-0.8), abs=1e-8)


def test_matches_textbook_rk4(rng):
    q = 2
    H = HamiltonianSchedule(((0.4, random_hermitian(rng, 4)), (0.6, random_hermitian(rng, 4))))
    nm = noise((relaxation_jump(0, q), 0.1), (dephasing_jump(1, q), 0.05), (relaxation_jump(1, q), 0.02))
    rho = DensityMatrix(random_density(rng, 4))
    ours = evolve(rho, H, nm, EvolutionConfig.rk4(0.01)).final_state.matrix
    ref = classical_rk4(rho.matrix, H, nm, 0.01)
    assert np.allclose(ours, ref, atol=1e-12, rtol=0)


def test_piecewise_unitary_against_expm(rng):
    H1, H2 = random_hermitian(rng, 4), random_hermitian(rng, 4)
    sched = HamiltonianSchedule(((0.3, H1), (0.7, H2)))
    rho = DensityMatrix(random_density(rng, 4))
    U = expm(-1j * H2 * 0.7) @ expm(-1j * H1 * 0.3)
    exact = U @ rho.matrix @ U.conj().T
    res = evolve(rho, sched, NoiseModel())
    assert np.max(np.abs(res.final_state.matrix - exact)) < 1e-10


def test_rk4_order():
    lam, T = 2.0, 1.0
    exact = 1 - 2 * np.exp(-lam * T)
    errors = []
    for step in (0.1, 0.05, 0.025):
        res = evolve(ONE, idle(1, T), noise((relaxation_jump(0, 1), lam)), EvolutionConfig.rk4(step))
        errors.append(abs(expectation(Observable(Z), res.final_state) - exact))
    for coarse, fine in zip(errors, errors[1:]):
        assert 10 <= coarse / fine <= 22


def test_step_larger_than_horizon():
    with pytest.raises(ConfigError):
        evolve(ONE, idle(1, 1.0), NoiseModel(), EvolutionConfig.rk4(2.0))


def test_divergence_detected():
    with pytest.raises(IntegrationDivergedError):
        evolve(ONE, idle(1, 1.0), noise((relaxation_jump(0, 1), 1e200)), EvolutionConfig.rk4(1.0))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), q=st.integers(1, 2), alpha=st.floats(0, 1))
def test_trace_hermiticity_and_linearity(seed, q, alpha):
    rng = np.random.default_rng(seed)
    dim = 2**q
    H = HamiltonianSchedule(((0.5, random_hermitian(rng, dim)), (0.5, random_hermitian(rng, dim))))
    nm = noise(*[(relaxation_jump(s, q), rng.uniform(0, 0.2)) for s in range(q)],
               *[(dephasing_jump(s, q), rng.uniform(0, 0.2)) for s in range(q)])
    r1, r2 = random_density(rng, dim), random_density(rng, dim)
    e1 = evolve(DensityMatrix(r1), H, nm)
    e2 = evolve(DensityMatrix(r2), H, nm)
    mix = evolve(DensityMatrix(alpha * r1 + (1 - alpha) * r2), H, nm)
    for res in (e1, e2, mix):
        assert res.trace_drift < 1e-8
        assert res.hermiticity_drift < 1e-8
    combo = alpha * e1.final_state.matrix + (1 - alpha) * e2.final_state.matrix
    assert np.max(np.abs(mix.final_state.matrix - combo)) < 1e-8


def test_disjoint_noise_factorises(rng):
    T = 1.5
    a, b = random_density(rng, 2), random_density(rng, 2)
    single_a = evolve(DensityMatrix(a), idle(1, T), noise((relaxation_jump(0, 1), 0.3)))
    single_b = evolve(DensityMatrix(b), idle(1, T), noise((dephasing_jump(0, 1), 0.2)))
    joint = evolve(DensityMatrix(np.kron(a, b)), idle(2, T),
                   noise((relaxation_jump(0, 2), 0.3), (dephasing_jump(1, 2), 0.2)))
    expected = np.kron(single_a.final_state.matrix, single_b.final_state.matrix)
    assert np.max(np.abs(joint.final_state.matrix - expected)) < 1e-8


# -- expectation_at_rates ---------------------------------------------------


def test_expectation_noise_free_is_ideal(rng):
    Hm = random_hermitian(rng, 2)
    rho = DensityMatrix(random_density(rng, 2))
    problem = LindbladProblem(rho, HamiltonianSchedule.constant(Hm, 0.8), NoiseModel(), Observable(Z))
    U = expm(-1j * Hm * 0.8)
    ideal = np.trace(Z @ U @ rho.matrix @ U.conj().T).real
    assert expectation_at_rates(problem) == pytest.approx(ideal, abs=1e-10)


def test_expectation_relaxation_and_rate_override():
    lam, T = 0.05, 1.0
    problem = LindbladProblem(ONE, idle(1, T), noise((relaxation_jump(0, 1), lam)), Observable(Z))
    assert expectation_at_rates(problem) == pytest.approx(1 - 2 * np.exp(-lam * T), abs=1e-10)
    assert expectation_at_rates(problem, rates=[3 * lam]) == pytest.approx(1 - 2 * np.exp(-3 * lam * T), abs=1e-10)


def test_expectation_tensor_factorisation():
    lam, T = 0.05, 1.0
    q2 = LindbladProblem(
        DensityMatrix.basis("10"),
        idle(2, T),
        noise((relaxation_jump(0, 2), lam), (dephasing_jump(1, 2), 0.03)),
        Observable.pauli("ZI"),
    )
    assert expectation_at_rates(q2) == pytest.approx(1 - 2 * np.exp(-lam * T), abs=1e-10)


def test_problem_requires_observable_and_matching_dims():
    problem = LindbladProblem(ONE, idle(1, 1.0), NoiseModel())
    with pytest.raises(ConfigError):
        expectation_at_rates(problem)
    with pytest.raises(ConfigError):
        LindbladProblem(ONE, idle(2, 1.0), NoiseModel())
    with pytest.raises(ConfigError):
        LindbladProblem(ONE, idle(1, 1.0), noise((relaxation_jump(0, 2), 0.1)))
