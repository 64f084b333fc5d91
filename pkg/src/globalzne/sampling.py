"""Finite-shot measurement of expectation values.

Randomness comes from numpy's ``PCG64`` bit generator seeded through
``SeedSequence``. ``RNG_ALGORITHM`` is written into every sampled report so
a run can be reproduced on another machine.

Standard error convention: ``stderr = std(outcomes, ddof=1) / sqrt(shots)``,
and 0 for a single shot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DensityMatrix, Observable
from .errors import ConfigError, CorruptedStateError

RNG_ALGORITHM = f"numpy.random.PCG64 via SeedSequence (numpy {np.__version__})"
NORMALIZATION_TOL = 1e-8
_U64 = 2**64


@dataclass(frozen=True)
class ShotConfig:
    shots: int
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.shots, bool) or int(self.shots) != self.shots or self.shots < 1:
            raise ConfigError(f"shots must be a positive integer, got {self.shots!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < _U64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        object.__setattr__(self, "shots", int(self.shots))
        object.__setattr__(self, "seed", int(self.seed))

    def for_task(self, index: int) -> "ShotConfig":
        return ShotConfig(self.shots, derive_seed(self.seed, index))


@dataclass(frozen=True)
class SampledEstimate:
    mean: float
    stderr: float
    shots: int
    counts: tuple[int, ...] = ()


def derive_seed(master: int, index: int) -> int:
    """Per-task seed: first 64-bit word of ``SeedSequence([master, index])``."""
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def outcome_probabilities(obs: Observable, rho: DensityMatrix) -> np.ndarray:
    """Born probabilities over the distinct eigenvalues of ``obs``."""
    r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    _, projectors = obs.spectrum
    if r.shape != projectors[0].shape:
        raise ValueError(f"dimension mismatch: observable {projectors[0].shape} vs state {r.shape}")
    p = np.array([np.einsum("ij,ji->", P, r).real for P in projectors])
    total = p.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL or np.any(p < -NORMALIZATION_TOL):
        raise CorruptedStateError(f"outcome probabilities do not normalise (sum {total:.12g})")
    p = np.clip(p, 0.0, 1.0)
    return p / p.sum()


def measure(obs: Observable, rho: DensityMatrix, config: ShotConfig) -> SampledEstimate:
    """Simulate ``config.shots`` projective measurements of ``obs`` on ``rho``."""
    values, _ = obs.spectrum
    p = outcome_probabilities(obs, rho)
    counts = make_rng(config.seed).multinomial(config.shots, p)
    n = config.shots
    mean = float(counts @ values) / n
    if n > 1:
        var = float(counts @ (values - mean) ** 2) / (n - 1)
        stderr = math.sqrt(max(var, 0.0) / n)
    else:
        stderr = 0.0
    return SampledEstimate(mean, stderr, n, tuple(int(c) for c in counts))
