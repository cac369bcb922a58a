"""Symmetric reference measures mu^(n) on E^n for a finite site set E.

Explicit families are stored on multisets: ``tables[n][gamma]`` is the mass
mu^(n) gives to the whole phi-fiber of gamma, so each ordered tuple in that
fiber carries ``tables[n][gamma] / multiplicity(gamma)``.  Symmetry under
coordinate permutation is therefore structural.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import prod

import numpy as np

from .configuration import (
    config_from_string,
    config_to_string,
    configs_of_level,
    multiset_multiplicity,
    phi_project,
)
from .errors import HypothesisViolation, InvalidSpecError

SUM_TOL = 1e-12
ROW_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SingleSiteMeasure:
    probs: np.ndarray
    support: tuple = field(init=False)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InvalidSpecError("single-site measure needs a nonempty 1-d vector")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise InvalidSpecError("single-site probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise InvalidSpecError(f"single-site probabilities sum to {p.sum()!r}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "support", tuple(int(x) + 1 for x in np.flatnonzero(p > 0)))

    @property
    def K(self) -> int:
        return self.probs.size

    def expect(self, f) -> float:
        return float(self.probs @ np.asarray(f, dtype=float))


@dataclass(frozen=True, eq=False)
class SymmetricFamily:
    """Either the product family (mu^(1))^n or an explicit list of tables."""

    mode: str
    K: int
    max_arity: int
    mu1: SingleSiteMeasure | None = None
    tables: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in ("product", "explicit"):
            raise InvalidSpecError(f"unknown family mode {self.mode!r}")
        if self.mode == "product" and self.mu1 is None:
            raise InvalidSpecError("product family needs mu1")
        if self.mode == "explicit":
            if not self.tables:
                raise InvalidSpecError("explicit family needs tables")
            for n in range(1, self.max_arity + 1):
                if n not in self.tables:
                    raise InvalidSpecError(f"explicit family is missing arity {n}")
                tab = self.tables[n]
                for g, v in tab.items():
                    if len(g) != self.K or sum(g) != n:
                        raise InvalidSpecError(f"table {n} has key {g} of the wrong size")
                    if not np.isfinite(v) or v < 0:
                        raise InvalidSpecError(f"table {n} has invalid mass {v} at {config_to_string(g)!r}")
                total = sum(tab.values())
                if abs(total - 1.0) > SUM_TOL:
                    raise InvalidSpecError(f"table {n} sums to {total!r}")

    # -- constructors ---------------------------------------------------

    @classmethod
    def from_ordered_tables(cls, ordered: dict, tol: float = SUM_TOL) -> "SymmetricFamily":
        """Build an explicit family from dense arrays of shape (K,)*n, checking symmetry."""
        K = None
        tables = {}
        for n, arr in ordered.items():
            arr = np.asarray(arr, dtype=float)
            K = arr.shape[0] if K is None else K
            for perm in itertools.permutations(range(n)):
                if np.max(np.abs(arr - arr.transpose(perm))) > tol:
                    raise InvalidSpecError(f"ordered table of arity {n} is not symmetric")
            tab = {}
            for g in configs_of_level(K, n):
                x = [s - 1 for s in _sites(g)]
                tab[g] = float(arr[tuple(x)]) * multiset_multiplicity(g)
            tables[int(n)] = tab
        return cls("explicit", K, max(tables), tables=tables)

    @classmethod
    def from_json(cls, block: dict, K: int, N: int) -> "SymmetricFamily":
        if block["mode"] == "product":
            mu1 = SingleSiteMeasure(block["mu1"])
            if mu1.K != K:
                raise InvalidSpecError(f"mu1 has {mu1.K} entries, model has {K} sites")
            return product_family(mu1, N)
        tables = {}
        for key, tab in block["tables"].items():
            n = int(key)
            tables[n] = {config_from_string(s, K): float(v) for s, v in tab.items()}
            for g in configs_of_level(K, n):
                tables[n].setdefault(g, 0.0)
        fam = cls("explicit", K, max(tables), tables=tables)
        if fam.max_arity < N:
            raise InvalidSpecError(f"explicit family stops at arity {fam.max_arity} < N = {N}")
        return fam

    def to_json(self) -> dict:
        if self.mode == "product":
            return {"mode": "product", "mu1": self.mu1.probs.tolist()}
        return {
            "mode": "explicit",
            "tables": {str(n): {config_to_string(g): v for g, v in tab.items()} for n, tab in self.tables.items()},
        }

    # -- masses ---------------------------------------------------------

    def _check_arity(self, n):
        if n > self.max_arity:
            raise InvalidSpecError(f"arity {n} exceeds the family's maximum {self.max_arity}")

    def fiber_mass(self, gamma) -> float:
        """mu^(|gamma|) of the set of ordered tuples projecting onto gamma."""
        n = sum(gamma)
        if n == 0:
            return 1.0
        self._check_arity(n)
        if self.mode == "product":
            return multiset_multiplicity(gamma) * prod(float(p) ** c for p, c in zip(self.mu1.probs, gamma))
        return float(self.tables[n].get(tuple(gamma), 0.0))

    def ordered_weight(self, gamma) -> float:
        return self.fiber_mass(gamma) / multiset_multiplicity(gamma)

    def ordered_table(self, n: int) -> np.ndarray:
        """Dense mu^(n) on E^n; expands the multiset storage on demand."""
        self._check_arity(n)
        out = np.empty((self.K,) * n)
        for x in itertools.product(range(self.K), repeat=n):
            out[x] = self.ordered_weight(phi_project([s + 1 for s in x], self.K))
        return out

    def marginal(self, gamma, m: int) -> float:
        """mu^(m)({x} x E^{m-n}) at any ordered x in the fiber of gamma."""
        n = sum(gamma)
        self._check_arity(m)
        if m <= n:
            raise InvalidSpecError(f"need m > n, got m={m}, n={n}")
        if self.mode == "product":
            return self.ordered_weight(gamma)
        total = 0.0
        for eta in configs_of_level(self.K, m - n):
            zeta = tuple(a + b for a, b in zip(gamma, eta))
            total += multiset_multiplicity(eta) * self.ordered_weight(zeta)
        return total


def _sites(gamma):
    return [x + 1 for x, c in enumerate(gamma) for _ in range(c)]


def product_family(mu1: SingleSiteMeasure, N: int) -> SymmetricFamily:
    return SymmetricFamily("product", mu1.K, N, mu1=mu1)


@dataclass(frozen=True)
class ConditionalKernel:
    """One row mu_n^(m)(gamma; .), as fiber masses over configurations of size m - n."""

    n: int
    m: int
    base: tuple
    row: dict
    mass: float
    empty: bool


@dataclass(frozen=True)
class SupportReport:
    passed: bool
    violations: list

    def to_json(self):
        return {"passed": self.passed, "violations": self.violations}


def density_h(fam: SymmetricFamily, n: int, m: int, x) -> float:
    """h_n^(m)(x) = mu^(n)(x) / mu^(m)(x, E^{m-n}); 1 on common null points."""
    if not 1 <= n < m:
        raise InvalidSpecError(f"need 1 <= n < m, got n={n}, m={m}")
    gamma = phi_project(x, fam.K)
    if sum(gamma) != n:
        raise InvalidSpecError(f"point has {sum(gamma)} coordinates, expected {n}")
    if fam.mode == "product":
        return 1.0
    w = fam.ordered_weight(gamma)
    marg = fam.marginal(gamma, m)
    if marg == 0.0:
        if w > 0.0:
            raise HypothesisViolation(
                f"marginal of mu^({m}) vanishes at {config_to_string(gamma)!r} where mu^({n}) > 0"
            )
        return 1.0
    return w / marg


def conditional_kernel(fam: SymmetricFamily, n: int, m: int, gamma) -> ConditionalKernel:
    """Distribution of the m - n particles born from gamma.

    The row is normalized so that mu^(n)(dx) mu_n^(m)(x; dy) = mu^(m)(dx, dy),
    i.e. it equals the conditional law of mu^(m) divided by h_n^(m).  For a
    consistent family (h = 1) it is a probability row.  Off the support of
    mu^(n) the conditional law is used as is (h = 1 by convention); if the
    conditional support is empty too the row is empty and flagged.
    """
    gamma = tuple(gamma)
    if sum(gamma) != n:
        raise InvalidSpecError(f"base configuration has {sum(gamma)} particles, expected {n}")
    if not 0 <= n < m:
        raise InvalidSpecError(f"need 0 <= n < m, got n={n}, m={m}")
    fam._check_arity(m)
    k = m - n
    if fam.mode == "product":
        row = {eta: fam.fiber_mass(eta) for eta in configs_of_level(fam.K, k)}
        return ConditionalKernel(n, m, gamma, row, float(sum(row.values())), False)
    if n == 0:
        row = {eta: fam.fiber_mass(eta) for eta in configs_of_level(fam.K, k)}
        return ConditionalKernel(n, m, gamma, row, 1.0, False)
    w = fam.ordered_weight(gamma)
    if w > 0:
        norm = w
    else:
        norm = fam.marginal(gamma, m)
        if norm == 0.0:
            row = {eta: 0.0 for eta in configs_of_level(fam.K, k)}
            return ConditionalKernel(n, m, gamma, row, 0.0, True)
    row = {}
    for eta in configs_of_level(fam.K, k):
        zeta = tuple(a + b for a, b in zip(gamma, eta))
        row[eta] = multiset_multiplicity(eta) * fam.ordered_weight(zeta) / norm
    return ConditionalKernel(n, m, gamma, row, float(sum(row.values())), False)


def composite_residual(fam: SymmetricFamily, n: int, m: int) -> float:
    """max_zeta |sum_{gamma+eta=zeta} mu^(n)(gamma) k(gamma; eta) - mu^(m)(zeta)| over fibers."""
    rebuilt = {zeta: 0.0 for zeta in configs_of_level(fam.K, m)}
    for gamma in configs_of_level(fam.K, n) if n > 0 else [(0,) * fam.K]:
        base = fam.fiber_mass(gamma)
        if base == 0.0:
            continue
        ker = conditional_kernel(fam, n, m, gamma)
        for eta, v in ker.row.items():
            zeta = tuple(a + b for a, b in zip(gamma, eta))
            rebuilt[zeta] += base * v
    return max(abs(v - fam.fiber_mass(z)) for z, v in rebuilt.items())


def check_H2(fam: SymmetricFamily) -> SupportReport:
    """mu^(n) and the n-marginal of mu^(m) must have the same null sets."""
    if fam.mode == "product":
        # the n-marginal of a product is the product itself
        return SupportReport(True, [])
    violations = []
    for n in range(1, fam.max_arity):
        for m in range(n + 1, fam.max_arity + 1):
            for gamma in configs_of_level(fam.K, n):
                w = fam.ordered_weight(gamma)
                marg = fam.marginal(gamma, m)
                if (w > 0) != (marg > 0):
                    violations.append(
                        {"n": n, "m": m, "point": config_to_string(gamma), "mu_n": w, "marginal": marg}
                    )
    return SupportReport(not violations, violations)


def check_H3(fam: SymmetricFamily) -> SupportReport:
    """Every kernel row must be supported where mu^(m-n) is positive."""
    violations = []
    for m in range(1, fam.max_arity + 1):
        for n in range(0, m):
            bases = configs_of_level(fam.K, n) if n > 0 else [(0,) * fam.K]
            for gamma in bases:
                ker = conditional_kernel(fam, n, m, gamma)
                for eta, v in ker.row.items():
                    if v > 0 and fam.fiber_mass(eta) == 0.0:
                        violations.append(
                            {"n": n, "m": m, "base": config_to_string(gamma), "charged": config_to_string(eta), "mass": v}
                        )
    return SupportReport(not violations, violations)


def kernel_row_masses(fam: SymmetricFamily, n: int, m: int) -> dict:
    """Total mass of each kernel row on the support of mu^(n); 1 for consistent families."""
    out = {}
    for gamma in configs_of_level(fam.K, n) if n > 0 else [(0,) * fam.K]:
        if fam.fiber_mass(gamma) > 0:
            out[gamma] = conditional_kernel(fam, n, m, gamma).mass
    return out
