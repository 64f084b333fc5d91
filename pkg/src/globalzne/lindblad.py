"""Time evolution under a Lindblad master equation with several dissipators.

The drive is a piecewise-constant schedule. Within one segment the
generator is linear and time independent, so it is assembled once as a
``dim**2 x dim**2`` superoperator acting on the row-major vectorised state.
Segment boundaries are always integration breakpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .core import (
    HERMITIAN_TOL,
    DensityMatrix,
    NoiseModel,
    Observable,
    as_matrix,
    dagger,
    dissipator_apply,
    expectation,
    hermiticity_error,
    num_qubits,
)
from .errors import ConfigError, IntegrationDivergedError

RK4_FIXED = "rk4_fixed"
RK45_ADAPTIVE = "rk45_adaptive"
METHODS = (RK4_FIXED, RK45_ADAPTIVE)

DEFAULT_STEPS = 2000
DEFAULT_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class HamiltonianSchedule:
    """Ordered ``(duration, generator)`` segments of a piecewise-constant drive."""

    segments: tuple[tuple[float, np.ndarray], ...]

    def __post_init__(self):
        if not self.segments:
            raise ConfigError("a Hamiltonian schedule needs at least one segment")
        segs = []
        for k, (duration, generator) in enumerate(self.segments):
            duration = float(duration)
            if not np.isfinite(duration) or duration <= 0:
                raise ConfigError(f"segment {k}: duration must be > 0, got {duration!r}")
            h = as_matrix(generator)
            if hermiticity_error(h) > HERMITIAN_TOL:
                raise ConfigError(f"segment {k}: generator is not Hermitian")
            h.setflags(write=False)
            segs.append((duration, h))
        dims = {h.shape[0] for _, h in segs}
        if len(dims) != 1:
            raise ConfigError(f"segment generators have mixed dimensions {sorted(dims)}")
        num_qubits(dims.pop())
        object.__setattr__(self, "segments", tuple(segs))

    @classmethod
    def constant(cls, generator, duration: float) -> "HamiltonianSchedule":
        return cls(((duration, generator),))

    @classmethod
    def idle(cls, dim: int, duration: float) -> "HamiltonianSchedule":
        return cls.constant(np.zeros((dim, dim), dtype=complex), duration)

    @property
    def dim(self) -> int:
        return self.segments[0][1].shape[0]

    @property
    def durations(self) -> tuple[float, ...]:
        return tuple(d for d, _ in self.segments)

    @property
    def total_time(self) -> float:
        return math.fsum(self.durations)

    def generator_at(self, t: float) -> np.ndarray:
        """Generator active at time ``t``; a boundary belongs to the later segment."""
        if t < 0 or t > self.total_time * (1 + 1e-12):
            raise ValueError(f"time {t} outside [0, {self.total_time}]")
        start = 0.0
        for duration, h in self.segments:
            start += duration
            if t < start:
                return h
        return self.segments[-1][1]


@dataclass(frozen=True)
class EvolutionConfig:
    """Integrator settings.

    ``rk4_fixed`` uses ``step`` (default ``T/2000``); ``rk45_adaptive`` uses
    ``tolerance`` as both relative and absolute local error target.
    """

    method: str = RK4_FIXED
    step: float | None = None
    tolerance: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown integrator {self.method!r}; expected one of {METHODS}")
        if self.method == RK4_FIXED and self.tolerance is not None:
            raise ConfigError("rk4_fixed takes a step, not a tolerance")
        if self.method == RK45_ADAPTIVE and self.step is not None:
            raise ConfigError("rk45_adaptive takes a tolerance, not a step")
        for name in ("step", "tolerance"):
            v = getattr(self, name)
            if v is not None and not (np.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be > 0, got {v!r}")

    @classmethod
    def rk4(cls, step: float | None = None) -> "EvolutionConfig":
        return cls(RK4_FIXED, step=step)

    @classmethod
    def rk45(cls, tolerance: float = DEFAULT_TOLERANCE) -> "EvolutionConfig":
        return cls(RK45_ADAPTIVE, tolerance=tolerance)


@dataclass(frozen=True)
class EvolutionResult:
    final_state: DensityMatrix
    trace_drift: float
    hermiticity_drift: float
    steps_taken: int


@dataclass(frozen=True, eq=False)
class LindbladProblem:
    """Initial state, drive, noise and (optionally) the measured observable."""

    rho0: DensityMatrix
    hamiltonian: HamiltonianSchedule
    noise: NoiseModel
    observable: Observable | None = None

    def __post_init__(self):
        dim = self.rho0.dim
        if self.hamiltonian.dim != dim:
            raise ConfigError(f"Hamiltonian dimension {self.hamiltonian.dim} != state dimension {dim}")
        for t in self.noise.terms:
            if t.jump.dim != dim:
                raise ConfigError(f"jump {t.jump.label} has dimension {t.jump.dim}, expected {dim}")
        if self.observable is not None and self.observable.dim != dim:
            raise ConfigError(f"observable dimension {self.observable.dim} != state dimension {dim}")

    @property
    def horizon(self) -> float:
        return self.hamiltonian.total_time

    def with_noise(self, noise: NoiseModel) -> "LindbladProblem":
        return LindbladProblem(self.rho0, self.hamiltonian, noise, self.observable)

    def with_rates(self, rates: Sequence[float]) -> "LindbladProblem":
        return self.with_noise(self.noise.with_rates(rates))

    def with_hamiltonian(self, hamiltonian: HamiltonianSchedule) -> "LindbladProblem":
        return LindbladProblem(self.rho0, hamiltonian, self.noise, self.observable)

    def noiseless(self) -> "LindbladProblem":
        return self.with_noise(NoiseModel())


def rhs(t: float, rho, hamiltonian: HamiltonianSchedule, noise: NoiseModel) -> np.ndarray:
    """Right-hand side -i[H(t), rho] + sum_i rate_i D_i(rho), in matrix form."""
    r = np.asarray(rho.matrix if isinstance(rho, DensityMatrix) else rho, dtype=complex)
    h = hamiltonian.generator_at(t)
    if h.shape != r.shape:
        raise ValueError(f"dimension mismatch: H {h.shape} vs rho {r.shape}")
    out = -1j * (h @ r - r @ h)
    for term in noise.terms:
        out += term.rate * dissipator_apply(term.jump, r)
    return out


def liouvillian(generator, noise: NoiseModel) -> np.ndarray:
    """Superoperator of the constant-generator master equation.

    Acts on ``rho.reshape(-1)`` (row-major), using vec(A X B) = (A kron B^T) vec(X).
    """
    h = as_matrix(generator)
    eye = np.eye(h.shape[0], dtype=complex)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for term in noise.terms:
        if term.rate == 0.0:
            continue
        L = term.jump.matrix
        LdL = dagger(L) @ L
        sup += term.rate * (np.kron(L, L.conj()) - 0.5 * np.kron(LdL, eye) - 0.5 * np.kron(eye, LdL.T))
    return sup


def _rk4_propagator(sup: np.ndarray, h: float) -> np.ndarray:
    # one classical RK4 step of a linear autonomous ODE is its 4th-order Taylor map
    hk = h * sup
    eye = np.eye(sup.shape[0], dtype=complex)
    return eye + hk @ (eye + hk @ (eye / 2 + hk @ (eye / 6 + hk / 24)))


def _integrate_rk4(vec, segments, sup_of, step):
    steps = 0
    for duration, generator in segments:
        n = max(1, math.ceil(duration / step * (1 - 1e-12)))
        prop = _rk4_propagator(sup_of(generator), duration / n)
        for _ in range(n):
            vec = prop @ vec
            if not np.all(np.isfinite(vec)):
                raise IntegrationDivergedError(f"non-finite state after {steps} steps")
            steps += 1
    return vec, steps


def _integrate_rk45(vec, segments, sup_of, tolerance):
    steps = 0
    for duration, generator in segments:
        sup = sup_of(generator)
        sol = solve_ivp(
            lambda _t, y: sup @ y,
            (0.0, duration),
            vec,
            method="RK45",
            rtol=tolerance,
            atol=tolerance,
            t_eval=[duration],
        )
        if sol.status != 0 or not np.all(np.isfinite(sol.y)):
            raise IntegrationDivergedError(f"adaptive integration failed: {sol.message}")
        vec = sol.y[:, -1]
        steps += int(sol.nfev // 6)
    return vec, steps


def evolve(
    rho0: DensityMatrix,
    hamiltonian: HamiltonianSchedule,
    noise: NoiseModel,
    config: EvolutionConfig | None = None,
) -> EvolutionResult:
    """Integrate the master equation from ``rho0`` over the whole schedule.

    The trace is never renormalised; trace and hermiticity drift are
    returned with the final state.

    Raises
    ------
    ConfigError
        If the fixed step exceeds the horizon.
    IntegrationDivergedError
        If the state becomes non-finite.
    """
    config = config or EvolutionConfig()
    dim = rho0.dim
    if hamiltonian.dim != dim:
        raise ValueError(f"dimension mismatch: H {hamiltonian.dim} vs rho {dim}")
    for t in noise.terms:
        if t.jump.dim != dim:
            raise ValueError(f"dimension mismatch: jump {t.jump.label} vs rho {dim}")
    T = hamiltonian.total_time

    cache: dict[int, np.ndarray] = {}

    def sup_of(generator):
        key = id(generator)
        if key not in cache:
            cache[key] = liouvillian(generator, noise)
        return cache[key]

    vec = np.array(rho0.matrix, dtype=complex).reshape(-1)
    # overflow surfaces as IntegrationDivergedError, not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        if config.method == RK4_FIXED:
            step = config.step if config.step is not None else T / DEFAULT_STEPS
            if step > T * (1 + 1e-12):
                raise ConfigError(f"step {step} exceeds the horizon {T}")
            vec, steps = _integrate_rk4(vec, hamiltonian.segments, sup_of, step)
        else:
            vec, steps = _integrate_rk45(vec, hamiltonian.segments, sup_of, config.tolerance)

    final = vec.reshape(dim, dim)
    return EvolutionResult(
        final_state=DensityMatrix(final, validate=False),
        trace_drift=float(abs(np.trace(final) - 1.0)),
        hermiticity_drift=hermiticity_error(final),
        steps_taken=steps,
    )


def evolve_problem(problem: LindbladProblem, config: EvolutionConfig | None = None) -> EvolutionResult:
    return evolve(problem.rho0, problem.hamiltonian, problem.noise, config)


def expectation_at_rates(
    problem: LindbladProblem,
    config: EvolutionConfig | None = None,
    rates: Sequence[float] | None = None,
) -> float:
    """Tr(O rho(T)) for the problem, optionally with its rate vector replaced."""
    if problem.observable is None:
        raise ConfigError("problem has no observable")
    if rates is not None:
        problem = problem.with_rates(rates)
    result = evolve_problem(problem, config)
    return expectation(problem.observable, result.final_state)
