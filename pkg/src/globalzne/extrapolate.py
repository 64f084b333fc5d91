"""Zero-noise estimators.

Univariate estimators work on ``(G, value)`` pairs, where ``G`` is the global
amplification factor. The multivariate hypersurface fit works on full rate
vectors and needs one sample per monomial of the truncated multinomial,
which is what ``overhead_count`` tallies.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    BudgetExceededError,
    ConditioningError,
    ConditioningWarning,
    ConfigError,
    DegenerateNodesError,
    DegenerateRatioError,
    InsufficientPointsError,
    NonDecayingDataError,
)

RICHARDSON = "richardson"
POLYNOMIAL = "polynomial"
EXPONENTIAL = "exponential"
HYPERSURFACE = "hypersurface"

MAX_WELL_CONDITIONED_NODES = 12
DEFAULT_BASIS_CAP = 10**7
SPACING_TOL = 1e-9


@dataclass(frozen=True)
class NoisyPoint:
    G: float
    value: float
    stderr: float = 0.0

    def __post_init__(self):
        for name in ("G", "value", "stderr"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not np.isfinite(self.value):
            raise ValueError(f"non-finite value at G={self.G}")
        if not np.isfinite(self.G) or self.G < 1:
            raise ValueError(f"amplification factor must be >= 1, got {self.G}")
        if not np.isfinite(self.stderr) or self.stderr < 0:
            raise ValueError(f"stderr must be >= 0, got {self.stderr}")


@dataclass(frozen=True)
class HypersurfaceSample:
    rates: tuple[float, ...]
    value: float
    stderr: float = 0.0

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if not rates:
            raise ValueError("empty rate vector")
        if any(not np.isfinite(r) or r < 0 for r in rates):
            raise ValueError(f"rates must be finite and >= 0, got {rates}")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "stderr", float(self.stderr))
        if not np.isfinite(self.value):
            raise ValueError("non-finite sample value")
        if not np.isfinite(self.stderr) or self.stderr < 0:
            raise ValueError(f"stderr must be >= 0, got {self.stderr}")


@dataclass(frozen=True)
class ExtrapolationResult:
    """Zero-noise estimate with the coefficients that produced it.

    For Richardson ``coefficients`` are the weights applied to the data; for
    fits they are the fitted model parameters (intercept first).
    """

    estimate: float
    coefficients: np.ndarray
    variance: float
    method: str
    residual_norm: float = 0.0
    condition: float = 1.0
    rank: int | None = None
    weights: np.ndarray | None = field(default=None, repr=False)

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance)


# -- counting ---------------------------------------------------------------


@dataclass(frozen=True)
class OverheadCount:
    cumulative: int
    top_order_term: int
    per_order: tuple[int, ...]


def overhead_count(N: int, n: int) -> OverheadCount:
    """Number of multinomial coefficients of order <= n in N variables.

    Order i contributes C(i + N - 1, N - 1); everything is exact integer
    arithmetic.
    """
    if N < 1 or n < 0:
        raise ValueError(f"need N >= 1 and n >= 0, got N={N}, n={n}")
    per_order = tuple(math.comb(i + N - 1, N - 1) for i in range(n + 1))
    return OverheadCount(sum(per_order), per_order[-1], per_order)


@dataclass(frozen=True)
class MonomialBasis:
    """Monomials of total degree <= n in N variables, graded lexicographic.

    Degree 0 (the intercept) comes first. Within a degree, exponent vectors
    are in descending lexicographic order, e.g. for N=2:
    (0,0), (1,0), (0,1), (2,0), (1,1), (0,2).

    Nothing is enumerated until :meth:`index_tuples` or :attr:`exponents`
    is used, so huge bases can still be counted.
    """

    N: int
    n: int
    cap: int = DEFAULT_BASIS_CAP

    def __post_init__(self):
        if self.N < 1 or self.n < 0:
            raise ValueError(f"need N >= 1 and n >= 0, got N={self.N}, n={self.n}")

    @property
    def size(self) -> int:
        return overhead_count(self.N, self.n).cumulative

    def __len__(self) -> int:
        return self.size

    def _check_budget(self, force: bool) -> None:
        if not force and self.size > self.cap:
            raise BudgetExceededError(
                f"basis for N={self.N}, n={self.n} has {self.size} monomials, over the cap of {self.cap}"
            )

    def index_tuples(self, force: bool = False) -> Iterator[tuple[int, ...]]:
        """Each monomial as the sorted tuple of variable indices it multiplies."""
        self._check_budget(force)
        for degree in range(self.n + 1):
            yield from itertools.combinations_with_replacement(range(self.N), degree)

    @property
    def exponents(self) -> list[tuple[int, ...]]:
        out = []
        for idx in self.index_tuples():
            e = [0] * self.N
            for k in idx:
                e[k] += 1
            out.append(tuple(e))
        return out

    def design_matrix(self, rates) -> np.ndarray:
        """Evaluate every monomial at each row of ``rates`` (shape m x N)."""
        x = np.asarray(rates, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.N:
            raise ValueError(f"rates must have shape (m, {self.N}), got {x.shape}")
        cols = []
        for idx in self.index_tuples():
            col = np.ones(x.shape[0])
            for k in idx:
                col = col * x[:, k]
            cols.append(col)
        return np.column_stack(cols)


def monomial_basis(N: int, n: int, cap: int = DEFAULT_BASIS_CAP, force: bool = False) -> MonomialBasis:
    basis = MonomialBasis(N, n, cap)
    basis._check_budget(force)
    if force:
        basis = MonomialBasis(N, n, max(cap, basis.size))
    return basis


# -- Richardson -------------------------------------------------------------


def richardson_coefficients(factors: Sequence[float]) -> np.ndarray:
    """Lagrange basis polynomials evaluated at G = 0.

    gamma_j = prod_{m != j} G_m / (G_m - G_j), so that sum(gamma) = 1 and
    sum(gamma * G**k) = 0 for k = 1..n. The smallest-magnitude coefficient
    absorbs the rounding residual, so the exact sum of the returned floats is
    1 to within that coefficient's ulp.
    """
    g = np.asarray(factors, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise InsufficientPointsError("Richardson extrapolation needs at least 2 factors", required=2)
    if np.unique(g).size != g.size:
        raise DegenerateNodesError(f"amplification factors must be distinct: {g.tolist()}")
    if g.size > MAX_WELL_CONDITIONED_NODES:
        warnings.warn(
            f"{g.size} Richardson nodes: coefficients grow combinatorially",
            ConditioningWarning,
            stacklevel=2,
        )
    gamma = np.empty_like(g)
    for j in range(g.size):
        others = np.delete(g, j)
        gamma[j] = np.prod(others / (others - g[j]))
    s = int(np.argmin(np.abs(gamma)))
    gamma[s] = math.fsum([1.0, *(-x for i, x in enumerate(gamma) if i != s)])
    return gamma


def _unpack(points: Sequence[NoisyPoint]):
    G = np.array([p.G for p in points], dtype=float)
    y = np.array([p.value for p in points], dtype=float)
    s = np.array([p.stderr for p in points], dtype=float)
    return G, y, s


def richardson_extrapolate(points: Sequence[NoisyPoint]) -> ExtrapolationResult:
    G, y, s = _unpack(points)
    gamma = richardson_coefficients(G)
    return ExtrapolationResult(
        estimate=float(gamma @ y),
        coefficients=gamma,
        variance=float(np.sum(gamma**2 * s**2)),
        method=RICHARDSON,
        weights=gamma,
    )


# -- least squares ----------------------------------------------------------


@dataclass
class _LstsqSolution:
    coef: np.ndarray
    intercept_weights: np.ndarray  # row r with intercept = r @ y
    residual_norm: float
    condition: float
    rank: int


def _weighted_lstsq(A: np.ndarray, y: np.ndarray, s: np.ndarray, allow_rank_deficient: bool) -> _LstsqSolution:
    """SVD least squares with unit-norm column scaling; never forms A^T A."""
    if np.any(s > 0) and np.any(s == 0):
        raise ConfigError("cannot mix exact (stderr = 0) and sampled points in one fit")
    w = 1.0 / s if np.all(s > 0) else np.ones_like(y)
    Aw = A * w[:, None]
    norms = np.linalg.norm(Aw, axis=0)
    norms[norms == 0] = 1.0
    As = Aw / norms
    U, sv, Vt = np.linalg.svd(As, full_matrices=False)
    tol = max(As.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    rank = int(np.sum(sv > tol))
    condition = float(sv[0] / sv[rank - 1]) if rank else math.inf
    ncols = A.shape[1]
    if rank < ncols:
        if not allow_rank_deficient:
            raise ConditioningError(f"design matrix has rank {rank} < {ncols} unknowns")
        # minimum-norm solution; the intercept is only meaningful if e0 lies in the row space
        V = Vt[:rank].T
        e0 = np.zeros(ncols)
        e0[0] = 1.0
        leak = np.linalg.norm(e0 - V @ (V.T @ e0))
        if leak > 1e-8:
            raise ConditioningError(
                f"design matrix has rank {rank} < {ncols} and the intercept is not identifiable"
            )
    U, sv, Vt = U[:, :rank], sv[:rank], Vt[:rank]
    pinv = (Vt.T / sv) @ U.T  # scaled-coefficient = pinv @ (w * y)
    coef = (pinv @ (w * y)) / norms
    intercept_weights = pinv[0] * w / norms[0]
    residual = np.linalg.norm((A @ coef - y) * w)
    return _LstsqSolution(coef, intercept_weights, float(residual), condition, rank)


def _variance(weights: np.ndarray, s: np.ndarray) -> float:
    return float(np.sum(weights**2 * s**2))


def polynomial_extrapolate(points: Sequence[NoisyPoint], degree: int) -> ExtrapolationResult:
    """Least-squares polynomial of the given degree in G; the estimate is its intercept.

    With exactly ``degree + 1`` points this is Richardson extrapolation.
    """
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    G, y, s = _unpack(points)
    if G.size < degree + 1:
        raise InsufficientPointsError(
            f"degree-{degree} fit needs at least {degree + 1} points, got {G.size}", required=degree + 1
        )
    A = np.vander(G, degree + 1, increasing=True)
    sol = _weighted_lstsq(A, y, s, allow_rank_deficient=False)
    return ExtrapolationResult(
        estimate=float(sol.coef[0]),
        coefficients=sol.coef,
        variance=_variance(sol.intercept_weights, s),
        method=POLYNOMIAL,
        residual_norm=sol.residual_norm,
        condition=sol.condition,
        rank=sol.rank,
        weights=sol.intercept_weights,
    )


def _exponential_zero(E1: float, E2: float, E3: float, k: float) -> tuple[float, float, float, float]:
    d1, d2 = E2 - E1, E3 - E2
    if d1 == 0:
        raise DegenerateRatioError("first two values are equal; decay ratio undefined")
    r = d2 / d1
    if not 0 < r < 1:
        raise NonDecayingDataError(f"decay ratio {r:.6g} outside (0, 1); data are not a decaying exponential")
    base = r**k  # r ** (G1 / spacing)
    b = d1 / (base * (r - 1))
    a = E1 - b * base
    return a + b, a, b, r


def exponential_extrapolate(points: Sequence[NoisyPoint]) -> ExtrapolationResult:
    """Fit a + b * r**(G / spacing) through three equally spaced points, evaluate at G = 0.

    The variance is propagated to first order with a numerical gradient.
    """
    if len(points) != 3:
        raise InsufficientPointsError(f"exponential extrapolation takes exactly 3 points, got {len(points)}", required=3)
    pts = sorted(points, key=lambda p: p.G)
    G, y, s = _unpack(pts)
    spacing = G[1] - G[0]
    if spacing <= 0:
        raise DegenerateNodesError(f"amplification factors must be distinct: {G.tolist()}")
    if abs((G[2] - G[1]) - spacing) > SPACING_TOL * max(1.0, spacing):
        raise ConfigError(f"exponential extrapolation needs equally spaced factors, got {G.tolist()}")
    if not (np.all(np.diff(y) > 0) or np.all(np.diff(y) < 0)):
        if y[1] == y[0]:
            raise DegenerateRatioError("first two values are equal; decay ratio undefined")
        raise NonDecayingDataError(f"values are not strictly monotonic: {y.tolist()}")
    k = G[0] / spacing
    estimate, a, b, r = _exponential_zero(*y, k)

    grad = np.zeros(3)
    if np.any(s > 0):
        for i in range(3):
            h = 1e-6 * max(abs(y[i]), 1e-3, abs(y[1] - y[0]))
            up, dn = y.copy(), y.copy()
            up[i] += h
            dn[i] -= h
            try:
                grad[i] = (_exponential_zero(*up, k)[0] - _exponential_zero(*dn, k)[0]) / (2 * h)
            except (NonDecayingDataError, DegenerateRatioError):
                grad[i] = math.inf
    return ExtrapolationResult(
        estimate=float(estimate),
        coefficients=np.array([a, b, r]),
        variance=_variance(grad, s) if np.any(s > 0) else 0.0,
        method=EXPONENTIAL,
        weights=grad,
    )


# -- hypersurface -----------------------------------------------------------


def hypersurface_fit(
    samples: Sequence[HypersurfaceSample],
    order: int,
    *,
    allow_rank_deficient: bool = False,
    cap: int = DEFAULT_BASIS_CAP,
) -> ExtrapolationResult:
    """Least-squares fit of the order-``order`` multinomial in the rate vector.

    The estimate is the coefficient of the constant monomial.

    By default every monomial coefficient must be determined, so the sample
    count must reach the basis size and a rank-deficient design raises
    :class:`ConditioningError`. With ``allow_rank_deficient=True`` the
    minimum-norm solution is accepted as long as the intercept itself is
    identifiable, e.g. when all samples lie on one ray G * rates.
    """
    if not samples:
        raise InsufficientPointsError("no samples", required=1)
    N = len(samples[0].rates)
    if any(len(smp.rates) != N for smp in samples):
        raise ValueError("samples have rate vectors of different lengths")
    basis = monomial_basis(N, order, cap=cap)
    if not allow_rank_deficient and len(samples) < basis.size:
        raise InsufficientPointsError(
            f"order-{order} hypersurface in {N} rates requires {basis.size} samples, got {len(samples)}",
            required=basis.size,
        )
    X = np.array([smp.rates for smp in samples])
    y = np.array([smp.value for smp in samples])
    s = np.array([smp.stderr for smp in samples])
    A = basis.design_matrix(X)
    sol = _weighted_lstsq(A, y, s, allow_rank_deficient=allow_rank_deficient)
    return ExtrapolationResult(
        estimate=float(sol.coef[0]),
        coefficients=sol.coef,
        variance=_variance(sol.intercept_weights, s),
        method=HYPERSURFACE,
        residual_norm=sol.residual_norm,
        condition=sol.condition,
        rank=sol.rank,
        weights=sol.intercept_weights,
    )
