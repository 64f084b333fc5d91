"""Zero-noise extrapolation for multiqubit systems with non-identically distributed noise."""

from .amplify import AmplificationPlan, equivalence_gap, scale_rates, stretch_pulse
from .core import (
    DensityMatrix,
    JumpOperator,
    NoiseModel,
    NoiseTerm,
    Observable,
    dephasing_jump,
    dissipator_apply,
    embed_single_site,
    expectation,
    relaxation_jump,
)
from .extrapolate import (
    ExtrapolationResult,
    HypersurfaceSample,
    MonomialBasis,
    NoisyPoint,
    exponential_extrapolate,
    hypersurface_fit,
    monomial_basis,
    overhead_count,
    polynomial_extrapolate,
    richardson_coefficients,
    richardson_extrapolate,
)
from .lindblad import (
    EvolutionConfig,
    EvolutionResult,
    HamiltonianSchedule,
    LindbladProblem,
    evolve,
    expectation_at_rates,
    rhs,
)
from .sampling import SampledEstimate, ShotConfig, measure

__version__ = "0.1.0"
