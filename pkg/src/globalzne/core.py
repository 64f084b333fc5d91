"""Dense operator primitives: states, observables, jump operators, noise models.

Conventions
-----------
* hbar = 1.
* Site 0 is the leftmost Kronecker factor, so ``|01>`` has qubit 0 in ``|0>``.
* Systems are capped at five qubits (dimension 32).
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, CorruptedStateError, WeakNoiseWarning

MAX_QUBITS = 5

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = -1e-10
IMAG_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
LOWERING = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|

PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}

RELAXATION = "relaxation"
DEPHASING = "dephasing"
CUSTOM = "custom"
JUMP_KINDS = (RELAXATION, DEPHASING, CUSTOM)


def as_matrix(value) -> np.ndarray:
    m = np.array(value, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ConfigError(f"expected a non-empty square matrix, got shape {m.shape}")
    return m


def num_qubits(dim: int) -> int:
    q = int(dim).bit_length() - 1
    if q < 1 or 2**q != dim:
        raise ConfigError(f"dimension {dim} is not 2**q for q >= 1")
    if q > MAX_QUBITS:
        raise ConfigError(f"{q} qubits exceeds the supported maximum of {MAX_QUBITS}")
    return q


def dagger(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def hermiticity_error(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - dagger(m)))) if m.size else 0.0


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return hermiticity_error(m) <= tol


def _check_same_dim(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch in {what}: {a.shape} vs {b.shape}")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A validated density matrix.

    Construction checks hermiticity and unit trace to ``1e-12`` and, unless
    ``check_psd`` is False, that the smallest eigenvalue is at least ``-1e-10``.
    Pass ``validate=False`` to wrap an integrator output whose drift is
    reported elsewhere.
    """

    matrix: np.ndarray
    validate: bool = field(default=True, repr=False)
    check_psd: bool = field(default=True, repr=False)

    def __post_init__(self):
        m = as_matrix(self.matrix)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        num_qubits(m.shape[0])
        if not self.validate:
            return
        herm = hermiticity_error(m)
        if herm > HERMITIAN_TOL:
            raise CorruptedStateError(f"density matrix is not Hermitian (error {herm:.3g})")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise CorruptedStateError(f"density matrix trace is {tr:.15g}, expected 1")
        if self.check_psd:
            lo = float(np.min(np.linalg.eigvalsh(m)))
            if lo < PSD_TOL:
                raise CorruptedStateError(f"density matrix has eigenvalue {lo:.3g} < 0")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def qubits(self) -> int:
        return num_qubits(self.dim)

    @classmethod
    def from_ket(cls, ket) -> "DensityMatrix":
        v = np.asarray(ket, dtype=complex).ravel()
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def basis(cls, bits: str) -> "DensityMatrix":
        """Computational basis state, e.g. ``basis("01")``."""
        if not bits or set(bits) - {"0", "1"}:
            raise ConfigError(f"invalid basis label {bits!r}")
        v = np.zeros(2 ** len(bits), dtype=complex)
        v[int(bits, 2)] = 1.0
        return cls.from_ket(v)

    @classmethod
    def maximally_mixed(cls, qubits: int) -> "DensityMatrix":
        d = 2**qubits
        return cls(np.eye(d, dtype=complex) / d)

    @classmethod
    def product(cls, factors: Sequence["DensityMatrix"]) -> "DensityMatrix":
        return cls(kron_all([f.matrix for f in factors]))


@dataclass(frozen=True, eq=False)
class Observable:
    """A Hermitian observable with a lazily cached spectral decomposition."""

    matrix: np.ndarray
    name: str = ""

    def __post_init__(self):
        m = as_matrix(self.matrix)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        num_qubits(m.shape[0])
        herm = hermiticity_error(m)
        if herm > HERMITIAN_TOL:
            raise ConfigError(f"observable is not Hermitian (error {herm:.3g})")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @functools.cached_property
    def spectrum(self) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
        """Distinct eigenvalues and the projectors onto their eigenspaces.

        Eigenvalues closer than ``1e-9`` are merged into one outcome.
        """
        h = 0.5 * (self.matrix + dagger(self.matrix))
        w, v = np.linalg.eigh(h)
        values: list[float] = []
        groups: list[list[int]] = []
        for k, lam in enumerate(w):
            if values and abs(lam - values[-1]) <= 1e-9:
                groups[-1].append(k)
            else:
                values.append(float(lam))
                groups.append([k])
        projectors = tuple(v[:, g] @ dagger(v[:, g]) for g in groups)
        for p in projectors:
            p.setflags(write=False)
        return np.array(values), projectors

    @classmethod
    def pauli(cls, label: str, coefficient: float = 1.0) -> "Observable":
        return cls(coefficient * pauli_string(label), name=label)

    @classmethod
    def pauli_sum(cls, terms: dict[str, float]) -> "Observable":
        return cls(pauli_sum(terms), name="+".join(terms))


@dataclass(frozen=True, eq=False)
class JumpOperator:
    matrix: np.ndarray
    kind: str = CUSTOM
    site: int | None = None
    label: str = ""

    def __post_init__(self):
        m = as_matrix(self.matrix)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.kind not in JUMP_KINDS:
            raise ConfigError(f"unknown jump kind {self.kind!r}; expected one of {JUMP_KINDS}")
        if not self.label:
            tag = self.kind if self.site is None else f"{self.kind}[{self.site}]"
            object.__setattr__(self, "label", tag)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class NoiseTerm:
    jump: JumpOperator
    rate: float

    def __post_init__(self):
        rate = float(self.rate)
        if not np.isfinite(rate) or rate < 0:
            raise ConfigError(f"noise rate must be finite and >= 0, got {self.rate!r}")
        object.__setattr__(self, "rate", rate)


@dataclass(frozen=True)
class NoiseModel:
    """Weighted sum of dissipators; ``rates`` is the rate vector."""

    terms: tuple[NoiseTerm, ...] = ()

    def __post_init__(self):
        terms = tuple(t if isinstance(t, NoiseTerm) else NoiseTerm(*t) for t in self.terms)
        object.__setattr__(self, "terms", terms)
        dims = {t.jump.dim for t in terms}
        if len(dims) > 1:
            raise ConfigError(f"jump operators have mixed dimensions {sorted(dims)}")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[JumpOperator, float]]) -> "NoiseModel":
        return cls(tuple(NoiseTerm(j, r) for j, r in pairs))

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def rates(self) -> np.ndarray:
        return np.array([t.rate for t in self.terms], dtype=float)

    @property
    def jumps(self) -> tuple[JumpOperator, ...]:
        return tuple(t.jump for t in self.terms)

    def with_rates(self, rates: Sequence[float]) -> "NoiseModel":
        rates = list(rates)
        if len(rates) != len(self.terms):
            raise ConfigError(f"expected {len(self.terms)} rates, got {len(rates)}")
        return NoiseModel(tuple(NoiseTerm(t.jump, r) for t, r in zip(self.terms, rates)))

    def weak_noise_violations(self, horizon: float) -> list[str]:
        """Labels of terms whose rate * horizon is at least 0.5."""
        return [t.jump.label for t in self.terms if t.rate * horizon >= 0.5]

    def check_weak_noise(self, horizon: float) -> bool:
        """Warn (never raise) when the weak-noise assumption is violated."""
        bad = self.weak_noise_violations(horizon)
        if bad:
            warnings.warn(
                f"rate*T >= 0.5 for {', '.join(bad)}; extrapolation assumes weak noise",
                WeakNoiseWarning,
                stacklevel=2,
            )
        return not bad


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    return functools.reduce(np.kron, mats, np.eye(1, dtype=complex))


def embed_single_site(op, site: int, qubits: int) -> np.ndarray:
    """Kronecker-embed a 2x2 operator at ``site`` of a ``qubits``-qubit register."""
    op = as_matrix(op)
    if op.shape != (2, 2):
        raise ValueError(f"single-site operator must be 2x2, got {op.shape}")
    if not 1 <= qubits <= MAX_QUBITS:
        raise ConfigError(f"qubit count must be in [1, {MAX_QUBITS}], got {qubits}")
    if not 0 <= site < qubits:
        raise IndexError(f"site {site} out of range for {qubits} qubits")
    factors = [I2] * qubits
    factors[site] = op
    return kron_all(factors)


def relaxation_jump(site: int, qubits: int) -> JumpOperator:
    return JumpOperator(embed_single_site(LOWERING, site, qubits), RELAXATION, site)


def dephasing_jump(site: int, qubits: int) -> JumpOperator:
    return JumpOperator(embed_single_site(Z, site, qubits), DEPHASING, site)


def pauli_string(label: str) -> np.ndarray:
    """Dense matrix of a Pauli string such as ``"ZI"`` (site 0 first)."""
    label = label.upper()
    if not label or set(label) - set(PAULIS):
        raise ConfigError(f"invalid Pauli string {label!r}")
    return kron_all([PAULIS[c] for c in label])


def pauli_sum(terms: dict[str, float]) -> np.ndarray:
    if not terms:
        raise ConfigError("empty Pauli sum")
    widths = {len(k) for k in terms}
    if len(widths) != 1:
        raise ConfigError(f"Pauli strings of different lengths: {sorted(terms)}")
    return sum(complex(c) * pauli_string(k) for k, c in terms.items())


def expectation(obs: Observable, rho: DensityMatrix | np.ndarray) -> float:
    """Real part of Tr(obs rho); raises if the imaginary part exceeds 1e-10."""
    o = obs.matrix if isinstance(obs, Observable) else as_matrix(obs)
    r = rho.matrix if isinstance(rho, DensityMatrix) else as_matrix(rho)
    _check_same_dim(o, r, "expectation")
    # Tr(AB) without forming the product
    val = np.einsum("ij,ji->", o, r)
    if abs(val.imag) > IMAG_TOL:
        raise CorruptedStateError(f"expectation has imaginary part {val.imag:.3g}")
    return float(val.real)


def dissipator_apply(jump: JumpOperator | np.ndarray, rho) -> np.ndarray:
    """L rho L^dag - (L^dag L rho + rho L^dag L) / 2."""
    L = jump.matrix if isinstance(jump, JumpOperator) else as_matrix(jump)
    r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    _check_same_dim(L, r, "dissipator")
    Ld = dagger(L)
    LdL = Ld @ L
    return L @ r @ Ld - 0.5 * (LdL @ r + r @ LdL)
