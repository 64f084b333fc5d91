"""Strict parsing of scenario / pipeline configuration trees.

A config file is a JSON object with any of the sections ``scenario``,
``pipeline``, ``overhead`` and ``surface``. Unknown keys are errors and
every error message names the offending field path, e.g.
``scenario.noise[1].rate``. See README.md for the full schema.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .core import (
    CUSTOM,
    DEPHASING,
    MAX_QUBITS,
    RELAXATION,
    DensityMatrix,
    JumpOperator,
    NoiseModel,
    NoiseTerm,
    Observable,
    dephasing_jump,
    kron_all,
    pauli_string,
    pauli_sum,
    relaxation_jump,
)
from .errors import ConfigError, ZNEError
from .extrapolate import EXPONENTIAL, HYPERSURFACE, POLYNOMIAL, RICHARDSON, SPACING_TOL
from .lindblad import METHODS as INTEGRATORS
from .lindblad import EvolutionConfig, HamiltonianSchedule, LindbladProblem
from .sampling import ShotConfig

PIPELINE_METHODS = (RICHARDSON, POLYNOMIAL, EXPONENTIAL, HYPERSURFACE)
SAMPLE_PLANS = ("random", "list", "ray")

_SQ2 = 1 / math.sqrt(2)
SINGLE_QUBIT_KETS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([_SQ2, _SQ2], dtype=complex),
    "-": np.array([_SQ2, -_SQ2], dtype=complex),
    "r": np.array([_SQ2, 1j * _SQ2], dtype=complex),
    "l": np.array([_SQ2, -1j * _SQ2], dtype=complex),
}


class _Obj:
    """Checked view of one JSON object; ``done()`` rejects unconsumed keys."""

    def __init__(self, raw, path: str):
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: expected an object, got {type(raw).__name__}")
        self.raw = raw
        self.path = path
        self.seen: set[str] = set()

    def sub(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.raw

    def get(self, key: str, default: Any = ..., kind=None):
        self.seen.add(key)
        if key not in self.raw or self.raw[key] is None:
            if default is ...:
                raise ConfigError(f"{self.sub(key)}: required field missing")
            return default
        value = self.raw[key]
        if kind is not None:
            value = _coerce(value, kind, self.sub(key))
        return value

    def done(self) -> None:
        extra = sorted(set(self.raw) - self.seen)
        if extra:
            where = self.path or "top level"
            raise ConfigError(f"{where}: unknown field(s) {', '.join(extra)}")


def _coerce(value, kind, path):
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{path}: expected a finite number, got {value!r}")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        return value
    if kind is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object, got {type(value).__name__}")
        return value
    raise TypeError(kind)


def _floats(value, path) -> list[float]:
    return [_coerce(v, float, f"{path}[{i}]") for i, v in enumerate(_coerce(value, list, path))]


def _matrix(raw, path) -> np.ndarray:
    """``{"real": [[...]], "imag": [[...]]}``; ``imag`` may be omitted."""
    obj = _Obj(raw, path)
    re = np.array(obj.get("real", kind=list), dtype=float)
    im = obj.get("imag", None, list)
    obj.done()
    m = re + 1j * np.array(im, dtype=float) if im is not None else re.astype(complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{path}: expected a square matrix, got shape {m.shape}")
    return m


def _operator(obj: _Obj, dim: int, what: str) -> np.ndarray:
    """An operator given as ``pauli``, ``paulis`` or ``matrix``."""
    given = [k for k in ("pauli", "paulis", "matrix") if obj.has(k)]
    if len(given) != 1:
        raise ConfigError(f"{obj.path}: give exactly one of pauli, paulis, matrix for the {what}")
    key = given[0]
    try:
        if key == "pauli":
            m = pauli_string(obj.get("pauli", kind=str))
        elif key == "paulis":
            terms = obj.get("paulis", kind=dict)
            m = pauli_sum({k: _coerce(v, float, f"{obj.sub('paulis')}.{k}") for k, v in terms.items()})
        else:
            m = _matrix(obj.get("matrix"), obj.sub("matrix"))
    except ConfigError as exc:
        if str(exc).startswith(obj.path):
            raise
        raise ConfigError(f"{obj.sub(key)}: {exc}") from None
    if m.shape != (dim, dim):
        raise ConfigError(f"{obj.sub(key)}: {what} has shape {m.shape}, expected {(dim, dim)}")
    return m


# -- scenario ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Scenario:
    qubits: int
    horizon: float
    problem: LindbladProblem

    @property
    def noise(self) -> NoiseModel:
        return self.problem.noise

    @property
    def observable(self) -> Observable:
        return self.problem.observable


def _initial_state(raw, q: int, path: str) -> DensityMatrix:
    if isinstance(raw, str):
        if len(raw) != q or set(raw) - set(SINGLE_QUBIT_KETS):
            raise ConfigError(
                f"{path}: expected {q} labels from {''.join(SINGLE_QUBIT_KETS)}, got {raw!r}"
            )
        ket = kron_all([SINGLE_QUBIT_KETS[c][:, None] for c in raw]).ravel()
        return DensityMatrix.from_ket(ket)
    obj = _Obj(raw, path)
    m = _matrix(obj.get("matrix"), obj.sub("matrix"))
    obj.done()
    if m.shape != (2**q, 2**q):
        raise ConfigError(f"{path}.matrix: shape {m.shape}, expected {(2**q, 2**q)}")
    try:
        return DensityMatrix(m)
    except ZNEError as exc:
        raise ConfigError(f"{path}.matrix: {exc}") from None


def _hamiltonian(raw, q: int, horizon: float, path: str) -> HamiltonianSchedule:
    dim = 2**q
    if raw is None:
        return HamiltonianSchedule.idle(dim, horizon)
    segments = []
    for k, seg in enumerate(_coerce(raw, list, path)):
        obj = _Obj(seg, f"{path}[{k}]")
        duration = obj.get("duration", kind=float)
        if duration <= 0:
            raise ConfigError(f"{obj.sub('duration')}: must be > 0")
        h = _operator(obj, dim, "generator")
        obj.done()
        if np.max(np.abs(h - h.conj().T)) > 1e-12:
            raise ConfigError(f"{obj.path}: generator is not Hermitian")
        segments.append((duration, h))
    if not segments:
        return HamiltonianSchedule.idle(dim, horizon)
    total = math.fsum(d for d, _ in segments)
    if abs(total - horizon) > 1e-9 * horizon:
        raise ConfigError(f"{path}: segment durations sum to {total}, but horizon is {horizon}")
    return HamiltonianSchedule(tuple(segments))


def _noise(raw, q: int, path: str) -> NoiseModel:
    terms = []
    for k, item in enumerate(_coerce(raw, list, path)):
        obj = _Obj(item, f"{path}[{k}]")
        kind = obj.get("kind", kind=str)
        rate = obj.get("rate", kind=float)
        if rate < 0:
            raise ConfigError(f"{obj.sub('rate')}: must be >= 0, got {rate}")
        if kind in (RELAXATION, DEPHASING):
            site = obj.get("site", kind=int)
            if not 0 <= site < q:
                raise ConfigError(f"{obj.sub('site')}: site {site} out of range for {q} qubits")
            jump = relaxation_jump(site, q) if kind == RELAXATION else dephasing_jump(site, q)
        elif kind == CUSTOM:
            label = obj.get("label", "", str)
            jump = JumpOperator(_operator(obj, 2**q, "jump operator"), CUSTOM, label=label)
        else:
            raise ConfigError(f"{obj.sub('kind')}: expected relaxation, dephasing or custom, got {kind!r}")
        obj.done()
        terms.append(NoiseTerm(jump, rate))
    return NoiseModel(tuple(terms))


def parse_scenario(raw, path: str = "scenario") -> Scenario:
    obj = _Obj(raw, path)
    q = obj.get("qubits", kind=int)
    if not 1 <= q <= MAX_QUBITS:
        raise ConfigError(f"{obj.sub('qubits')}: must be between 1 and {MAX_QUBITS}, got {q}")
    horizon = obj.get("horizon", kind=float)
    if horizon <= 0:
        raise ConfigError(f"{obj.sub('horizon')}: must be > 0")
    rho0 = _initial_state(obj.get("initial_state"), q, obj.sub("initial_state"))
    hamiltonian = _hamiltonian(obj.get("hamiltonian", None), q, horizon, obj.sub("hamiltonian"))
    noise = _noise(obj.get("noise", []), q, obj.sub("noise"))
    obs_obj = _Obj(obj.get("observable"), obj.sub("observable"))
    try:
        observable = Observable(_operator(obs_obj, 2**q, "observable"))
    except ConfigError as exc:
        if str(exc).startswith(obs_obj.path):
            raise
        raise ConfigError(f"{obs_obj.path}: {exc}") from None
    obs_obj.done()
    obj.done()
    return Scenario(q, horizon, LindbladProblem(rho0, hamiltonian, noise, observable))


# -- pipeline ---------------------------------------------------------------


@dataclass(frozen=True)
class SamplePlan:
    kind: str
    count: int = 0
    low: float = 0.0
    high: float = 2.0
    seed: int = 0
    rates: tuple[tuple[float, ...], ...] = ()
    factors: tuple[float, ...] = ()


@dataclass(frozen=True)
class PipelineSpec:
    method: str
    order: int
    factors: tuple[float, ...] = ()
    samples: SamplePlan | None = None
    allow_rank_deficient: bool = False
    sampling: ShotConfig | None = None
    integrator: EvolutionConfig = field(default_factory=EvolutionConfig)


def _integrator(raw, path) -> EvolutionConfig:
    if raw is None:
        return EvolutionConfig()
    obj = _Obj(raw, path)
    method = obj.get("method", "rk4_fixed", str)
    if method not in INTEGRATORS:
        raise ConfigError(f"{obj.sub('method')}: expected one of {INTEGRATORS}, got {method!r}")
    step = obj.get("step", None, float)
    tol = obj.get("tolerance", None, float)
    obj.done()
    try:
        return EvolutionConfig(method, step=step, tolerance=tol)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _shots(raw, path) -> ShotConfig | None:
    if raw is None:
        return None
    obj = _Obj(raw, path)
    shots = obj.get("shots", kind=int)
    seed = obj.get("seed", 0, int)
    obj.done()
    try:
        return ShotConfig(shots, seed)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _sample_plan(raw, path) -> SamplePlan:
    obj = _Obj(raw, path)
    kind = obj.get("plan", kind=str)
    if kind == "random":
        plan = SamplePlan(
            kind,
            count=obj.get("count", kind=int),
            low=obj.get("low", 0.0, float),
            high=obj.get("high", 2.0, float),
            seed=obj.get("seed", 0, int),
        )
        if plan.count < 1:
            raise ConfigError(f"{obj.sub('count')}: must be >= 1")
        if not 0 <= plan.low < plan.high:
            raise ConfigError(f"{path}: need 0 <= low < high, got low={plan.low}, high={plan.high}")
    elif kind == "list":
        rates = obj.get("rates", kind=list)
        plan = SamplePlan(kind, rates=tuple(tuple(_floats(r, f"{obj.sub('rates')}[{i}]")) for i, r in enumerate(rates)))
    elif kind == "ray":
        factors = _floats(obj.get("factors"), obj.sub("factors"))
        plan = SamplePlan(kind, factors=tuple(factors))
    else:
        raise ConfigError(f"{obj.sub('plan')}: expected one of {SAMPLE_PLANS}, got {kind!r}")
    obj.done()
    return plan


def check_factors(factors, path: str) -> tuple[float, ...]:
    if len(factors) < 1:
        raise ConfigError(f"{path}: at least one factor required")
    if any(g < 1 for g in factors):
        raise ConfigError(f"{path}: amplification factors must be >= 1, got {list(factors)}")
    if any(b <= a for a, b in zip(factors, factors[1:])):
        raise ConfigError(f"{path}: factors must be strictly increasing, got {list(factors)}")
    return tuple(factors)


def parse_pipeline(raw, path: str = "pipeline") -> PipelineSpec:
    obj = _Obj(raw, path)
    method = obj.get("method", kind=str)
    if method not in PIPELINE_METHODS:
        raise ConfigError(f"{obj.sub('method')}: expected one of {PIPELINE_METHODS}, got {method!r}")
    integrator = _integrator(obj.get("integrator", None), obj.sub("integrator"))
    sampling = _shots(obj.get("sampling", None), obj.sub("sampling"))

    if method == HYPERSURFACE:
        order = obj.get("order", kind=int)
        samples = _sample_plan(obj.get("samples"), obj.sub("samples"))
        allow = obj.get("allow_rank_deficient", False, bool)
        obj.done()
        if order < 0:
            raise ConfigError(f"{obj.sub('order')}: must be >= 0")
        return PipelineSpec(method, order, samples=samples, allow_rank_deficient=allow,
                            sampling=sampling, integrator=integrator)

    factors = check_factors(_floats(obj.get("factors"), obj.sub("factors")), obj.sub("factors"))
    order = obj.get("order", None, int)
    obj.done()
    if method == RICHARDSON:
        if len(factors) < 2:
            raise ConfigError(f"{obj.sub('factors')}: Richardson needs at least 2 factors")
        if order is None:
            order = len(factors) - 1
        if order != len(factors) - 1:
            raise ConfigError(f"{obj.sub('order')}: order {order} needs exactly {order + 1} factors, got {len(factors)}")
    elif method == POLYNOMIAL:
        if order is None:
            raise ConfigError(f"{obj.sub('order')}: required field missing")
        if order < 0 or len(factors) < order + 1:
            raise ConfigError(f"{obj.sub('order')}: degree {order} needs at least {order + 1} factors, got {len(factors)}")
    else:
        if len(factors) != 3:
            raise ConfigError(f"{obj.sub('factors')}: exponential extrapolation needs exactly 3 factors")
        spacing = factors[1] - factors[0]
        if abs(factors[2] - factors[1] - spacing) > SPACING_TOL * max(1.0, spacing):
            raise ConfigError(f"{obj.sub('factors')}: exponential extrapolation needs equally spaced factors, got {list(factors)}")
        order = 2 if order is None else order
    return PipelineSpec(method, order, factors=factors, sampling=sampling, integrator=integrator)


# -- overhead / surface sections -------------------------------------------


@dataclass(frozen=True)
class OverheadSpec:
    sources: int
    order: int
    stability_minutes: float = 1.0
    settings_per_period: int = 1


def parse_overhead(raw, path: str = "overhead") -> OverheadSpec:
    obj = _Obj(raw, path)
    spec = OverheadSpec(
        obj.get("sources", kind=int),
        obj.get("order", kind=int),
        obj.get("stability_minutes", 1.0, float),
        obj.get("settings_per_period", 1, int),
    )
    obj.done()
    if spec.sources < 1 or spec.order < 0:
        raise ConfigError(f"{path}: need sources >= 1 and order >= 0")
    if spec.stability_minutes <= 0 or spec.settings_per_period < 1:
        raise ConfigError(f"{path}: stability_minutes and settings_per_period must be positive")
    return spec


@dataclass(frozen=True)
class SurfaceSpec:
    rate_1: tuple[float, float, int]
    rate_2: tuple[float, float, int]
    rays: tuple[tuple[float, float], ...]
    factors: tuple[float, ...]


def _axis(raw, path) -> tuple[float, float, int]:
    items = _coerce(raw, list, path)
    if len(items) != 3:
        raise ConfigError(f"{path}: expected [low, high, count]")
    lo, hi = _coerce(items[0], float, f"{path}[0]"), _coerce(items[1], float, f"{path}[1]")
    count = _coerce(items[2], int, f"{path}[2]")
    if not 0 < lo <= hi or count < 1:
        raise ConfigError(f"{path}: need 0 < low <= high and count >= 1")
    return lo, hi, count


def parse_surface(raw, path: str = "surface") -> SurfaceSpec:
    obj = _Obj(raw, path)
    grid = _Obj(obj.get("grid"), obj.sub("grid"))
    r1 = _axis(grid.get("rate_1"), grid.sub("rate_1"))
    r2 = _axis(grid.get("rate_2"), grid.sub("rate_2"))
    grid.done()
    rays = []
    for i, ray in enumerate(obj.get("rays", kind=list)):
        v = _floats(ray, f"{obj.sub('rays')}[{i}]")
        if len(v) != 2 or min(v) < 0:
            raise ConfigError(f"{obj.sub('rays')}[{i}]: expected two rates >= 0")
        rays.append(tuple(v))
    factors = check_factors(_floats(obj.get("factors"), obj.sub("factors")), obj.sub("factors"))
    obj.done()
    if len(factors) < 2:
        raise ConfigError(f"{obj.sub('factors')}: need at least 2 factors")
    return SurfaceSpec(r1, r2, tuple(rays), factors)


# -- files -------------------------------------------------------------------


@dataclass(frozen=True)
class ConfigFile:
    scenario: Scenario | None = None
    pipeline: PipelineSpec | None = None
    overhead: OverheadSpec | None = None
    surface: SurfaceSpec | None = None


def parse_config(raw) -> ConfigFile:
    obj = _Obj(raw, "")
    out = ConfigFile(
        scenario=parse_scenario(obj.get("scenario")) if obj.has("scenario") else None,
        pipeline=parse_pipeline(obj.get("pipeline")) if obj.has("pipeline") else None,
        overhead=parse_overhead(obj.get("overhead")) if obj.has("overhead") else None,
        surface=parse_surface(obj.get("surface")) if obj.has("surface") else None,
    )
    obj.done()
    return out


def load_config(path: str | Path) -> ConfigFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from None
    try:
        return parse_config(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
