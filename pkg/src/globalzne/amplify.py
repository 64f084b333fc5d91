"""Global noise amplification: every rate is multiplied by the same factor G.

Two physically different routes produce the same state. Scaling the rates
directly is what the pipelines use. Stretching the pulse (T -> G T,
H(t) -> H(t / G) / G) is what hardware does; ``equivalence_gap`` measures
how far the two simulated routes disagree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NoiseModel, NoiseTerm
from .errors import ConfigError, DomainError
from .lindblad import EvolutionConfig, HamiltonianSchedule, LindbladProblem, evolve


def _check_factor(G) -> float:
    G = float(G)
    if not np.isfinite(G) or G < 1:
        raise DomainError(f"amplification factor must be >= 1, got {G!r}")
    return G


def scale_rates(noise: NoiseModel, G: float) -> NoiseModel:
    G = _check_factor(G)
    return NoiseModel(tuple(NoiseTerm(t.jump, t.rate * G) for t in noise.terms))


def stretch_pulse(hamiltonian: HamiltonianSchedule, G: float) -> HamiltonianSchedule:
    G = _check_factor(G)
    if G == 1.0:
        return hamiltonian
    return HamiltonianSchedule(tuple((d * G, h / G) for d, h in hamiltonian.segments))


@dataclass(frozen=True)
class AmplificationPlan:
    """Base noise model and the increasing amplification factors, starting at 1."""

    base: NoiseModel
    factors: tuple[float, ...]

    def __post_init__(self):
        factors = tuple(float(g) for g in self.factors)
        if not factors:
            raise ConfigError("an amplification plan needs at least one factor")
        if factors[0] != 1.0:
            raise ConfigError(f"the first amplification factor must be 1, got {factors[0]}")
        for g in factors:
            _check_factor(g)
        if any(b <= a for a, b in zip(factors, factors[1:])):
            raise ConfigError(f"amplification factors must be strictly increasing: {factors}")
        object.__setattr__(self, "factors", factors)

    def __len__(self) -> int:
        return len(self.factors)

    def noise_models(self) -> list[NoiseModel]:
        return [scale_rates(self.base, g) for g in self.factors]

    def rate_vectors(self) -> np.ndarray:
        return np.outer(self.factors, self.base.rates)


def stretched_problem(problem: LindbladProblem, G: float) -> LindbladProblem:
    return problem.with_hamiltonian(stretch_pulse(problem.hamiltonian, G))


def rate_scaled_problem(problem: LindbladProblem, G: float) -> LindbladProblem:
    return problem.with_noise(scale_rates(problem.noise, G))


def equivalence_gap(
    problem: LindbladProblem, G: float, config: EvolutionConfig | None = None
) -> float:
    """Largest entrywise difference between the stretched and rate-scaled final states."""
    stretched = evolve(problem.rho0, stretch_pulse(problem.hamiltonian, G), problem.noise, config)
    scaled = evolve(problem.rho0, problem.hamiltonian, scale_rates(problem.noise, G), config)
    return float(np.max(np.abs(stretched.final_state.matrix - scaled.final_state.matrix)))

