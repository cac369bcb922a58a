"""Finite multiple configurations over the sites {1, ..., K}.

A configuration is stored as its count vector (c_1, ..., c_K).  Enumeration
is graded by particle number and, within a level, lexicographic in the
sorted site list, so for K = 2, N = 2 the order is
``"", "1", "2", "1,1", "1,2", "2,2"``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb, factorial, prod

import numpy as np

from .errors import CapacityError, InvalidSpecError

DEFAULT_MAX_STATES = 200_000

Configuration = tuple  # count vector, one entry per site


def config_size(gamma) -> int:
    return int(sum(gamma))


def config_to_string(gamma) -> str:
    """Comma-joined sorted site list; the empty configuration is ""."""
    return ",".join(str(x + 1) for x, c in enumerate(gamma) for _ in range(c))


def config_from_string(text: str, K: int) -> Configuration:
    text = text.strip()
    if not text:
        return (0,) * K
    return phi_project([int(s) for s in text.split(",")], K)


def phi_project(x, K: int) -> Configuration:
    """Map an ordered tuple of sites to its configuration (counts)."""
    counts = [0] * K
    for site in x:
        if not 1 <= site <= K:
            raise InvalidSpecError(f"site {site} outside 1..{K}")
        counts[site - 1] += 1
    return tuple(counts)


def multiset_multiplicity(gamma) -> int:
    """Number of ordered tuples in the fiber of gamma: |gamma|! / prod c_x!."""
    return factorial(sum(gamma)) // prod(factorial(c) for c in gamma)


def level_count(K: int, n: int) -> int:
    return comb(n + K - 1, K - 1)


def sub_configurations(gamma, k: int) -> list[Configuration]:
    """All distinct eta <= gamma (componentwise) with |eta| = k."""
    n = sum(gamma)
    if not 0 <= k <= n:
        raise InvalidSpecError(f"k = {k} outside 0..{n}")
    out = []
    for eta in itertools.product(*(range(c + 1) for c in gamma)):
        if sum(eta) == k:
            out.append(tuple(eta))
    out.sort(key=config_to_string)
    return out


def configs_of_level(K: int, n: int) -> list[Configuration]:
    return [phi_project(s, K) for s in itertools.combinations_with_replacement(range(1, K + 1), n)]


@dataclass(frozen=True, eq=False)
class ConfigSpace:
    K: int
    N: int
    configs: tuple = field(repr=False)
    index: dict = field(repr=False)
    level_offsets: np.ndarray = field(repr=False)
    sizes: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.configs)

    def level(self, n: int) -> range:
        return range(int(self.level_offsets[n]), int(self.level_offsets[n + 1]))

    def labels(self) -> list[str]:
        return [config_to_string(g) for g in self.configs]

    def lookup(self, gamma) -> int:
        return self.index[tuple(gamma)]


def enumerate_configs(K: int, N: int, max_states: int = DEFAULT_MAX_STATES) -> ConfigSpace:
    if K < 1 or N < 0:
        raise InvalidSpecError(f"need K >= 1 and N >= 0, got K={K}, N={N}")
    total = comb(N + K, K)
    if total > max_states:
        raise CapacityError(total, max_states)
    configs = []
    offsets = [0]
    for n in range(N + 1):
        configs.extend(configs_of_level(K, n))
        offsets.append(len(configs))
    index = {g: i for i, g in enumerate(configs)}
    sizes = np.array([sum(g) for g in configs], dtype=int)
    return ConfigSpace(K, N, tuple(configs), index, np.array(offsets), sizes)



def reference_distribution(space: ConfigSpace, fam, rho) -> np.ndarray:
    """pi(gamma) = rho_|gamma| * mu^(|gamma|)(phi-fiber of gamma)."""
    w = rho.weights if hasattr(rho, "weights") else np.asarray(rho, dtype=float)
    if w.size != space.N + 1:
        raise InvalidSpecError(f"rho has {w.size} entries, truncation needs {space.N + 1}")
    if fam.max_arity < space.N:
        raise InvalidSpecError(f"family covers arities up to {fam.max_arity}, space needs {space.N}")
    if fam.K != space.K:
        raise InvalidSpecError(f"family lives on {fam.K} sites, space on {space.K}")
    pi = np.empty(len(space))
    for i, g in enumerate(space.configs):
        pi[i] = w[sum(g)] * fam.fiber_mass(g)
    return pi
