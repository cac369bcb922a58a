"""Q-matrices on the truncated nonnegative integers.

Covers the reversible measure of a birth-death chain, the detailed-balance
check, the quadratic form of a Q-matrix and the Hardy-type criterion
sequences for birth-death chains.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import InvalidSpecError

BALANCE_TOL = 1e-12
CHECK_TOL = 1e-10

KINDS = ("poincare", "superPoincare", "lambdaPhi", "superLogSobolev")


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """Off-diagonal jump rates q_ij on {0, ..., N}; the diagonal is ignored."""

    rates: np.ndarray
    total_rates: np.ndarray = field(init=False)
    irreducible: bool = field(init=False)

    def __post_init__(self):
        q = np.array(self.rates, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise InvalidSpecError(f"rate matrix must be square, got shape {q.shape}")
        np.fill_diagonal(q, 0.0)
        if not np.all(np.isfinite(q)):
            raise InvalidSpecError("rates must be finite")
        if np.any(q < 0):
            i, j = np.argwhere(q < 0)[0]
            raise InvalidSpecError(f"negative rate q[{i},{j}] = {q[i, j]}")
        q.setflags(write=False)
        object.__setattr__(self, "rates", q)
        object.__setattr__(self, "total_rates", q.sum(axis=1))
        ncomp, _ = connected_components(q > 0, directed=True, connection="strong")
        object.__setattr__(self, "irreducible", bool(ncomp == 1))

    @property
    def size(self) -> int:
        return self.rates.shape[0]

    @property
    def truncation(self) -> int:
        return self.size - 1

    def is_birth_death(self) -> bool:
        i, j = np.nonzero(self.rates)
        return bool(np.all(np.abs(i - j) == 1))

    def perturbed(self, i: int, j: int, delta: float) -> "RateMatrix":
        q = self.rates.copy()
        q[i, j] += delta
        return RateMatrix(q)


@dataclass(frozen=True, eq=False)
class ReversibleMeasure:
    """Strictly positive probability weights on {0, ..., N}."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise InvalidSpecError("reversible measure needs a nonempty 1-d weight vector")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InvalidSpecError("reversible measure must be strictly positive")
        if abs(w.sum() - 1.0) > BALANCE_TOL:
            raise InvalidSpecError(f"reversible measure sums to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, weights) -> "ReversibleMeasure":
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum())

    @property
    def size(self) -> int:
        return self.weights.size

    def tails(self) -> np.ndarray:
        """tails[n] = rho([n, N]); summed from the top to avoid cancellation."""
        return np.cumsum(self.weights[::-1])[::-1]


@dataclass(frozen=True, eq=False)
class BirthDeathSpec:
    """Birth rates l_0..l_{N-1} and death rates d_1..d_N."""

    births: np.ndarray
    deaths: np.ndarray

    def __post_init__(self):
        b = np.array(self.births, dtype=float)
        d = np.array(self.deaths, dtype=float)
        if b.ndim != 1 or d.shape != b.shape:
            raise InvalidSpecError("births and deaths must be 1-d of equal length")
        if np.any(~np.isfinite(b)) or np.any(b <= 0):
            raise InvalidSpecError("birth rates must be positive")
        if np.any(~np.isfinite(d)) or np.any(d <= 0):
            raise InvalidSpecError("death rates must be positive")
        object.__setattr__(self, "births", b)
        object.__setattr__(self, "deaths", d)

    @classmethod
    def from_measure(cls, births, rho: ReversibleMeasure) -> "BirthDeathSpec":
        """Derive d_{n+1} = rho_n l_n / rho_{n+1} from detailed balance."""
        b = np.asarray(births, dtype=float)
        w = rho.weights
        if w.size != b.size + 1:
            raise InvalidSpecError("rho must have one more entry than births")
        return cls(b, w[:-1] * b / w[1:])

    @property
    def truncation(self) -> int:
        return self.births.size

    def rate_matrix(self) -> RateMatrix:
        n = self.births.size
        q = np.zeros((n + 1, n + 1))
        q[np.arange(n), np.arange(1, n + 1)] = self.births
        q[np.arange(1, n + 1), np.arange(n)] = self.deaths
        return RateMatrix(q)


@dataclass(frozen=True)
class BalanceReport:
    residual: np.ndarray
    max_residual: float
    argmax: tuple[int, int]
    passed: bool
    tol: float


@dataclass(frozen=True)
class CriterionSequence:
    kind: str
    alpha: float | None
    n: np.ndarray
    values: np.ndarray
    multipliers: np.ndarray
    cumulative_sums: np.ndarray
    sup: float
    argsup: int
    tail_trend: str
    edge_dropped: bool

    @property
    def trend_to_zero(self) -> bool:
        # heuristic label only
        return self.tail_trend == "decreasing"

    def csv_rows(self):
        yield ("n", "S_n", "multiplier", "cumulative_sum")
        for k, s, m, c in zip(self.n, self.values, self.multipliers, self.cumulative_sums):
            yield (int(k), repr(float(s)), repr(float(m)), repr(float(c)))


def reversible_measure_from_birth_death(births, deaths) -> ReversibleMeasure:
    """Solve rho_{n+1} = rho_n l_n / d_{n+1} and normalize."""
    spec = BirthDeathSpec(births, deaths)
    # accumulate in log space so long chains with factorial decay do not underflow
    logw = np.concatenate([[0.0], np.cumsum(np.log(spec.births) - np.log(spec.deaths))])
    w = np.exp(logw - logw.max())
    return ReversibleMeasure.normalized(w)


def check_detailed_balance(Q: RateMatrix, rho: ReversibleMeasure, tol: float = CHECK_TOL) -> BalanceReport:
    if Q.size != rho.size:
        raise InvalidSpecError(f"size mismatch: Q has {Q.size} states, rho has {rho.size}")
    flux = rho.weights[:, None] * Q.rates
    residual = flux - flux.T
    i, j = np.unravel_index(np.argmax(np.abs(residual)), residual.shape)
    worst = float(abs(residual[i, j]))
    return BalanceReport(residual, worst, (int(i), int(j)), worst <= tol, tol)


def q_form_energy(Q: RateMatrix, rho: ReversibleMeasure, r) -> float:
    """sum_{n<m} rho_n q_nm (r_n - r_m)^2."""
    r = np.asarray(r, dtype=float)
    if r.shape != (Q.size,) or rho.size != Q.size:
        raise InvalidSpecError(f"sequence length {r.shape} does not match {Q.size} states")
    diff2 = (r[:, None] - r[None, :]) ** 2
    upper = np.triu(rho.weights[:, None] * Q.rates, k=1)
    return float(np.sum(upper * diff2))


def _trend(values: np.ndarray) -> str:
    if values.size < 2:
        return "undetermined"
    w = min(values.size, max(2, math.ceil(values.size / 4)))
    d = np.diff(values[-w:])
    if np.all(d < 0):
        return "decreasing"
    if np.all(d > 0):
        return "increasing"
    return "mixed"


def criterion_sequence(spec, rho: ReversibleMeasure, kind: str = "poincare", alpha: float | None = None) -> CriterionSequence:
    """Tail-times-resistance sequence S_n = rho([n+1, N]) M_n sum_{j<=n} 1/(rho_j l_j).

    ``spec`` is a BirthDeathSpec or a tridiagonal RateMatrix.  The multiplier
    M_n is 1 for ``poincare``/``superPoincare``, (log 1/tail)^alpha for
    ``lambdaPhi`` and log(1/tail) for ``superLogSobolev``.  The index n = N,
    whose tail is empty at the truncation edge, is dropped and flagged.
    """
    if kind not in KINDS:
        raise InvalidSpecError(f"unknown criterion kind {kind!r}; expected one of {KINDS}")
    if isinstance(spec, RateMatrix):
        if not spec.is_birth_death():
            raise InvalidSpecError("criterion sequences need a birth-death (tridiagonal) chain")
        births = np.diag(spec.rates, k=1)
    else:
        births = spec.births
    if np.any(births <= 0):
        raise InvalidSpecError("birth rates l_n must be positive")
    w = rho.weights
    if w.size != births.size + 1:
        raise InvalidSpecError("rho size does not match the chain")
    if kind == "lambdaPhi":
        if alpha is None or not 0 < alpha <= 1:
            raise InvalidSpecError("lambdaPhi needs an exponent alpha in (0, 1]")
    else:
        alpha = None

    n = np.arange(births.size)
    tail = rho.tails()[1:]
    cumulative = np.cumsum(1.0 / (w[:-1] * births))
    log_inv_tail = -np.log(tail)
    if kind == "lambdaPhi":
        mult = log_inv_tail ** alpha
    elif kind == "superLogSobolev":
        mult = log_inv_tail
    else:
        mult = np.ones_like(tail)
    values = tail * mult * cumulative
    k = int(np.argmax(values))
    return CriterionSequence(
        kind=kind,
        alpha=alpha,
        n=n,
        values=values,
        multipliers=mult,
        cumulative_sums=cumulative,
        sup=float(values[k]),
        argsup=k,
        tail_trend=_trend(values),
        edge_dropped=True,
    )
