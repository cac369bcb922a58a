"""Reaction and diffusion jump structures on the configuration space.

Every structure is stored as a flux matrix J(gamma, eta) = pi(gamma) q(gamma, eta)
together with pi; rates are recovered as J / pi.  Energies are always the
symmetric form 1/2 sum_{gamma, eta} J(gamma, eta) (F(gamma) - F(eta))^2.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from math import comb, prod

import numpy as np
import scipy.sparse as sp

from .chain import RateMatrix, ReversibleMeasure, check_detailed_balance
from .configuration import (
    ConfigSpace,
    enumerate_configs,
    phi_project,
    reference_distribution,
    sub_configurations,
)
from .errors import HypothesisViolation, InvalidSpecError, SymmetryError
from .measures import (
    SingleSiteMeasure,
    SymmetricFamily,
    check_H2,
    check_H3,
    conditional_kernel,
    product_family,
)

SYMMETRY_TOL = 1e-12
DROP_TOL = 1e-9
DENSE_LIMIT = 2000
DEATH_RULES = ("uniform", "distinct")


@dataclass(frozen=True, eq=False)
class ReversibleGenerator:
    """pi together with a flux matrix J; reversible iff J is symmetric."""

    pi: np.ndarray
    flux: sp.csr_matrix = field(repr=False)
    labels: tuple | None = field(default=None, repr=False)
    sizes: np.ndarray | None = field(default=None, repr=False)
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        J = sp.csr_matrix(self.flux, dtype=float)
        J.setdiag(0.0)
        J.eliminate_zeros()
        if J.shape != (pi.size, pi.size):
            raise InvalidSpecError(f"flux shape {J.shape} does not match {pi.size} states")
        if J.nnz and J.data.min() < 0:
            raise InvalidSpecError("flux must be nonnegative off the diagonal")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "flux", J)

    @property
    def n_states(self) -> int:
        return self.pi.size

    @property
    def storage(self) -> str:
        return "dense" if self.n_states <= DENSE_LIMIT else "sparse"

    @property
    def total_rates(self) -> np.ndarray:
        out = np.zeros(self.n_states)
        pos = self.pi > 0
        out[pos] = np.asarray(self.flux.sum(axis=1)).ravel()[pos] / self.pi[pos]
        return out

    def rate_matrix(self) -> sp.csr_matrix:
        inv = np.zeros(self.n_states)
        pos = self.pi > 0
        inv[pos] = 1.0 / self.pi[pos]
        return sp.csr_matrix(sp.diags(inv) @ self.flux)

    def rate(self, i: int, j: int) -> float:
        return float(self.flux[i, j] / self.pi[i]) if self.pi[i] > 0 else 0.0

    def dense_flux(self) -> np.ndarray:
        return self.flux.toarray()

    def energy(self, F, storage: str | None = None) -> float:
        """1/2 sum J(gamma, eta) (F(gamma) - F(eta))^2."""
        F = np.asarray(F, dtype=float)
        if F.shape != (self.n_states,):
            raise InvalidSpecError(f"function has shape {F.shape}, expected ({self.n_states},)")
        if (storage or self.storage) == "dense":
            J = self.dense_flux()
            return float(0.5 * np.sum(J * (F[:, None] - F[None, :]) ** 2))
        coo = self.flux.tocoo()
        return float(0.5 * np.sum(coo.data * (F[coo.row] - F[coo.col]) ** 2))

    def energies(self, Fs) -> np.ndarray:
        """Energies of the rows of a (k, n) array."""
        Fs = np.atleast_2d(np.asarray(Fs, dtype=float))
        coo = self.flux.tocoo()
        d = Fs[:, coo.row] - Fs[:, coo.col]
        return 0.5 * (d**2) @ coo.data

    def with_rate(self, i: int, j: int, rate: float) -> "ReversibleGenerator":
        """Copy with one jump rate overwritten (for constructing broken examples)."""
        J = self.flux.tolil(copy=True)
        J[i, j] = self.pi[i] * rate
        info = dict(self.info, edited=(i, j))
        return ReversibleGenerator(self.pi, J.tocsr(), self.labels, self.sizes, info)

    def edge_rows(self):
        """CSV rows (gamma, eta, J, rate) in enumeration order."""
        yield ("gamma", "eta", "J", "rate")
        labels = self.labels or tuple(str(i) for i in range(self.n_states))
        coo = self.flux.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for k in order:
            i, j, v = int(coo.row[k]), int(coo.col[k]), float(coo.data[k])
            yield (labels[i], labels[j], repr(v), repr(float(v / self.pi[i])))

    def summary(self) -> dict:
        rep = check_flux_symmetry(self)
        out = {
            "states": self.n_states,
            "edges": int(self.flux.nnz),
            "symmetry_residual": rep.max_residual,
        }
        for key in ("drop_mass", "drop_fraction", "death_rule", "kind"):
            if key in self.info:
                out[key] = self.info[key]
        return out


@dataclass(frozen=True)
class FluxSymmetryReport:
    max_residual: float
    argmax: tuple[int, int] | None
    passed: bool
    tol: float
    labels: tuple[str, str] | None = None

    def to_json(self):
        return {
            "max_residual": self.max_residual,
            "pair": list(self.labels) if self.labels else None,
            "passed": self.passed,
            "tol": self.tol,
        }


def check_flux_symmetry(gen: ReversibleGenerator, tol: float = SYMMETRY_TOL) -> FluxSymmetryReport:
    diff = (gen.flux - gen.flux.T).tocoo()
    if diff.nnz == 0 or np.max(np.abs(diff.data)) == 0.0:
        return FluxSymmetryReport(0.0, None, True, tol)
    k = int(np.argmax(np.abs(diff.data)))
    i, j = int(diff.row[k]), int(diff.col[k])
    worst = float(abs(diff.data[k]))
    names = (gen.labels[i], gen.labels[j]) if gen.labels else None
    return FluxSymmetryReport(worst, (i, j), worst <= tol, tol, names)


def _finalize(pi, rows, cols, vals, strict, **kw) -> ReversibleGenerator:
    n = pi.size
    J = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    J.sum_duplicates()
    gen = ReversibleGenerator(pi, J, **kw)
    rep = check_flux_symmetry(gen)
    gen.info["assembly_residual"] = rep.max_residual
    if rep.passed:
        # store the exactly symmetric version so downstream symmetry is structural
        sym = 0.5 * (gen.flux + gen.flux.T)
        return ReversibleGenerator(pi, sym, gen.labels, gen.sizes, gen.info)
    if strict:
        raise SymmetryError(
            f"flux asymmetry {rep.max_residual:.3e} at {rep.labels or rep.argmax} exceeds {rep.tol:g}"
        )
    return gen


# -- chain and site generators ------------------------------------------------


def chain_generator(Q: RateMatrix, rho: ReversibleMeasure, strict: bool = True) -> ReversibleGenerator:
    """The Q-matrix on {0..N} as a flux structure; energy equals E_Q."""
    if Q.size != rho.size:
        raise InvalidSpecError(f"Q has {Q.size} states, rho has {rho.size}")
    J = sp.coo_matrix(rho.weights[:, None] * Q.rates)
    labels = tuple(str(i) for i in range(Q.size))
    return _finalize(rho.weights.copy(), J.row, J.col, J.data, strict, labels=labels,
                     sizes=np.arange(Q.size), info={"kind": "chain"})


@dataclass(frozen=True, eq=False)
class SingleSiteGenerator:
    """Jump rates a(x, y) on E, reversible for mu^(1)."""

    rates: np.ndarray
    mu1: SingleSiteMeasure

    def __post_init__(self):
        a = np.array(self.rates, dtype=float)
        K = self.mu1.K
        if a.shape != (K, K):
            raise InvalidSpecError(f"site rates must be {K}x{K}, got {a.shape}")
        np.fill_diagonal(a, 0.0)
        if np.any(~np.isfinite(a)) or np.any(a < 0):
            raise InvalidSpecError("site rates must be finite and nonnegative")
        flux = self.mu1.probs[:, None] * a
        res = np.max(np.abs(flux - flux.T))
        if res > SYMMETRY_TOL:
            raise HypothesisViolation(f"site rates are not reversible for mu1 (residual {res:.3e})")
        a.setflags(write=False)
        object.__setattr__(self, "rates", a)

    @property
    def K(self) -> int:
        return self.mu1.K

    def energy(self, f) -> float:
        f = np.asarray(f, dtype=float)
        return float(0.5 * np.sum(self.mu1.probs[:, None] * self.rates * (f[:, None] - f[None, :]) ** 2))


def product_site_generator(site: SingleSiteGenerator, n: int) -> ReversibleGenerator:
    """Coordinate-sum form on E^n under (mu^(1))^n; states are ordered tuples."""
    if n < 1:
        raise InvalidSpecError("need n >= 1")
    K = site.K
    tuples = list(itertools.product(range(K), repeat=n))
    index = {t: i for i, t in enumerate(tuples)}
    p = site.mu1.probs
    pi = np.array([prod(p[x] for x in t) for t in tuples])
    rows, cols, vals = [], [], []
    for i, t in enumerate(tuples):
        if pi[i] == 0:
            continue
        for c, x in enumerate(t):
            for y in range(K):
                r = site.rates[x, y]
                if r > 0:
                    s = t[:c] + (y,) + t[c + 1:]
                    rows.append(i)
                    cols.append(index[s])
                    vals.append(pi[i] * r)
    labels = tuple(",".join(str(x + 1) for x in t) for t in tuples)
    return _finalize(pi, rows, cols, vals, True, labels=labels, info={"kind": "site", "arity": n})


# -- reaction ---------------------------------------------------------------------


def truncate_chain(Q: RateMatrix, rho: ReversibleMeasure, N: int):
    """Restrict (Q, rho) to {0..N}; returns (Q_N, rho_N, dropped rate per level)."""
    if Q.size != rho.size:
        raise InvalidSpecError(f"Q has {Q.size} states, rho has {rho.size}")
    if Q.size < N + 1:
        raise InvalidSpecError(f"chain has {Q.size} states, truncation needs {N + 1}")
    dropped = Q.rates[: N + 1, N + 1:].sum(axis=1)
    if Q.size == N + 1:
        return Q, rho, dropped
    return RateMatrix(Q.rates[: N + 1, : N + 1]), ReversibleMeasure.normalized(rho.weights[: N + 1]), dropped


def _death_weight(gamma, eta, rule):
    m, k = sum(gamma), sum(eta)
    if rule == "distinct":
        return 1.0 / len(sub_configurations(gamma, k))
    # each k-subset of the m particles is removed with equal probability
    return prod(comb(c, e) for c, e in zip(gamma, eta)) / comb(m, k)


def build_reaction_qpair(
    space: ConfigSpace,
    fam: SymmetricFamily,
    Q: RateMatrix,
    rho: ReversibleMeasure,
    death_rule: str = "uniform",
    strict: bool = True,
    check_hypotheses: bool = True,
    drop_tol: float = DROP_TOL,
) -> ReversibleGenerator:
    """Birth and death of groups of particles driven by the level chain Q.

    From gamma with n particles, k = m - n particles are born at rate q_{n,m}
    with positions drawn from the conditional kernel.  Deaths from level m to n
    remove a uniformly chosen k-subset of the particles (``death_rule="uniform"``);
    ``"distinct"`` instead picks uniformly among distinct sub-configurations,
    which breaks flux symmetry on configurations with repeated sites and is
    kept only as a diagnostic (use ``strict=False``).
    """
    if death_rule not in DEATH_RULES:
        raise InvalidSpecError(f"unknown death rule {death_rule!r}")
    N = space.N
    Q, rho, dropped = truncate_chain(Q, rho, N)
    if check_hypotheses:
        bal = check_detailed_balance(Q, rho)
        if not bal.passed:
            raise HypothesisViolation(f"(H1) residual {bal.max_residual:.3e} at {bal.argmax}")
        for name, rep in (("H2", check_H2(fam)), ("H3", check_H3(fam))):
            if not rep.passed:
                raise HypothesisViolation(f"({name}) fails: {rep.violations[0]}")
    pi = reference_distribution(space, fam, rho)
    q = Q.rates
    rows, cols, vals = [], [], []
    for i, gamma in enumerate(space.configs):
        n = sum(gamma)
        if pi[i] == 0.0:
            continue
        for m in range(n + 1, N + 1):
            if q[n, m] == 0:
                continue
            ker = conditional_kernel(fam, n, m, gamma)
            for eta, w in ker.row.items():
                if w > 0:
                    rows.append(i)
                    cols.append(space.lookup(tuple(a + b for a, b in zip(gamma, eta))))
                    vals.append(pi[i] * q[n, m] * w)
        for m in range(0, n):
            if q[n, m] == 0:
                continue
            for eta in sub_configurations(gamma, n - m):
                rows.append(i)
                cols.append(space.lookup(tuple(a - b for a, b in zip(gamma, eta))))
                vals.append(pi[i] * q[n, m] * _death_weight(gamma, eta, death_rule))
    drop_mass = float(rho.weights @ dropped)
    top_out = float(rho.weights[N] * (q[N].sum() + dropped[N]))
    drop_fraction = drop_mass / top_out if top_out > 0 else (0.0 if drop_mass == 0 else np.inf)
    if drop_fraction > drop_tol:
        warnings.warn(f"births above level {N} dropped: lost outflow {drop_mass:.3e} ({drop_fraction:.3e} of level-{N} outflow)")
    info = {
        "kind": "reaction",
        "death_rule": death_rule,
        "drop_mass": drop_mass,
        "drop_fraction": drop_fraction,
        "level_rates": q.sum(axis=1),
        "truncated_levels": [int(n) for n in np.flatnonzero(dropped > 0)],
        "rho": rho.weights,
        "Q": q,
    }
    return _finalize(pi, rows, cols, vals, strict, labels=tuple(space.labels()), sizes=space.sizes.copy(), info=info)


def reaction_energy(gen: ReversibleGenerator, F) -> float:
    return gen.energy(F)


def ordered_sum_energy(gen: ReversibleGenerator, F) -> float:
    """sum over pairs with |gamma| < |eta| of J (F(gamma) - F(eta))^2."""
    F = np.asarray(F, dtype=float)
    coo = gen.flux.tocoo()
    up = gen.sizes[coo.row] < gen.sizes[coo.col]
    return float(np.sum(coo.data[up] * (F[coo.row[up]] - F[coo.col[up]]) ** 2))


def level_flux(gen: ReversibleGenerator, N: int) -> np.ndarray:
    """Total flux between particle-number levels: entry (n, m) = sum over level pairs."""
    coo = gen.flux.tocoo()
    out = np.zeros((N + 1, N + 1))
    np.add.at(out, (gen.sizes[coo.row], gen.sizes[coo.col]), coo.data)
    return out


def death_rule_residuals(space, fam, Q, rho) -> dict:
    """Assembly asymmetry under each death rule."""
    out = {}
    for rule in DEATH_RULES:
        gen = build_reaction_qpair(space, fam, Q, rho, death_rule=rule, strict=False)
        rep = check_flux_symmetry(gen)
        out[rule] = {"residual": rep.max_residual, "pair": rep.labels}
    return out


# -- diffusion ------------------------------------------------------------------


def build_diffusion_generator(
    space: ConfigSpace, site: SingleSiteGenerator, rho: ReversibleMeasure, fam: SymmetricFamily | None = None
) -> ReversibleGenerator:
    """Independent particle motion: gamma -> gamma - delta_x + delta_y at rate c_x a(x, y)."""
    if fam is not None and fam.mode != "product":
        raise InvalidSpecError("the independent-sum diffusion needs a product reference family")
    if site.K != space.K:
        raise InvalidSpecError(f"site generator has {site.K} sites, space has {space.K}")
    w = rho.weights
    if w.size > space.N + 1:
        w = w[: space.N + 1] / w[: space.N + 1].sum()
    pi = reference_distribution(space, product_family(site.mu1, space.N), w)
    a = site.rates
    rows, cols, vals = [], [], []
    for i, gamma in enumerate(space.configs):
        if pi[i] == 0:
            continue
        for x, c in enumerate(gamma):
            if c == 0:
                continue
            for y in range(space.K):
                if a[x, y] > 0:
                    target = list(gamma)
                    target[x] -= 1
                    target[y] += 1
                    rows.append(i)
                    cols.append(space.lookup(tuple(target)))
                    vals.append(pi[i] * c * a[x, y])
    return _finalize(pi, rows, cols, vals, True, labels=tuple(space.labels()), sizes=space.sizes.copy(),
                     info={"kind": "diffusion"})


def combined_generator(reaction: ReversibleGenerator, diffusion: ReversibleGenerator | None) -> ReversibleGenerator:
    if diffusion is None:
        return reaction
    if reaction.n_states != diffusion.n_states or np.max(np.abs(reaction.pi - diffusion.pi)) > SYMMETRY_TOL:
        raise InvalidSpecError("reaction and diffusion structures live on different reference distributions")
    info = dict(reaction.info, kind="combined")
    return ReversibleGenerator(reaction.pi, reaction.flux + diffusion.flux, reaction.labels, reaction.sizes, info)


# -- functions on the configuration space ----------------------------------------------


@dataclass(frozen=True, eq=False)
class FunctionOnGamma:
    space: ConfigSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.space),):
            raise InvalidSpecError(f"function has {v.size} values, space has {len(self.space)} states")
        if not np.all(np.isfinite(v)):
            raise InvalidSpecError("function values must be finite")
        object.__setattr__(self, "values", v)

    def restriction(self, n: int) -> np.ndarray:
        """F^(n) = F o phi_n as a dense array over E^n."""
        K = self.space.K
        out = np.empty((K,) * n)
        for x in itertools.product(range(K), repeat=n):
            out[x] = self.values[self.space.lookup(phi_project([s + 1 for s in x], K))]
        return out


def lift_sequence(space: ConfigSpace, r) -> FunctionOnGamma:
    r = np.asarray(r, dtype=float)
    if r.shape != (space.N + 1,):
        raise InvalidSpecError(f"sequence has length {r.size}, expected {space.N + 1}")
    return FunctionOnGamma(space, r[space.sizes])


def level_square_means(gen: ReversibleGenerator, F, N: int) -> np.ndarray:
    """mu^(n)((F^(n))^2) for each level n, from pi-weighted sums."""
    F = np.asarray(F, dtype=float)
    mass = np.bincount(gen.sizes, weights=gen.pi, minlength=N + 1)
    sq = np.bincount(gen.sizes, weights=gen.pi * F**2, minlength=N + 1)
    return sq / mass


def triangle_lower_bound(gen: ReversibleGenerator, F, N: int) -> float:
    """sum_{n<m} rho_n q_{n,m} (sqrt(mu^(m)(F^(m)^2)) - sqrt(mu^(n)(F^(n)^2)))^2."""
    q = gen.info["Q"]
    w = gen.info["rho"]
    roots = np.sqrt(level_square_means(gen, F, N))
    upper = np.triu(w[:, None] * q, k=1)
    return float(np.sum(upper * (roots[None, :] - roots[:, None]) ** 2))


def entropy_sq(pi, F) -> float:
    """Ent_pi(F^2) = pi(F^2 log F^2) - pi(F^2) log pi(F^2)."""
    pi = np.asarray(pi, dtype=float)
    f2 = np.asarray(F, dtype=float) ** 2
    m = float(pi @ f2)
    if m == 0:
        return 0.0
    pos = f2 > 0
    return float(np.sum(pi[pos] * f2[pos] * np.log(f2[pos]))) - m * np.log(m)


@dataclass(frozen=True)
class TestFunctionIdentityReport:
    __test__ = False  # not a pytest class

    n: int
    pairs: dict
    tol: float
    truncated: bool

    @property
    def residuals(self) -> dict:
        return {k: abs(c - p) for k, (c, p) in self.pairs.items()}

    @property
    def passed(self) -> bool:
        return all(r <= self.tol for r in self.residuals.values())


def rank_one_test_function(
    space: ConfigSpace,
    f,
    n: int,
    *,
    reaction: ReversibleGenerator,
    diffusion: ReversibleGenerator | None = None,
    site: SingleSiteGenerator,
    tol: float = 1e-10,
):
    """F = prod f over the particles on level n, 0 elsewhere, with its four closed forms."""
    f = np.asarray(f, dtype=float)
    mu = site.mu1.probs
    if abs(mu @ f**2 - 1.0) > 1e-10:
        raise InvalidSpecError(f"need mu1(f^2) = 1, got {mu @ f**2!r}")
    if not 1 <= n <= space.N:
        raise InvalidSpecError(f"level {n} outside 1..{space.N}")
    vals = np.zeros(len(space))
    for i in space.level(n):
        vals[i] = prod(float(f[x]) ** c for x, c in enumerate(space.configs[i]))
    F = FunctionOnGamma(space, vals)
    pi = reaction.pi
    rho_n = float(reaction.info["rho"][n])
    q_n = float(reaction.info["level_rates"][n])
    f2 = f**2
    pos = f2 > 0
    site_ent = float(np.sum(mu[pos] * f2[pos] * np.log(f2[pos])))
    pairs = {
        "pi(F^2)": (float(pi @ vals**2), rho_n),
        "Ent(F^2)": (entropy_sq(pi, vals), n * rho_n * site_ent - rho_n * np.log(rho_n)),
        "E_0(F,F)": (diffusion.energy(vals) if diffusion is not None else 0.0,
                     n * rho_n * site.energy(f) if diffusion is not None else 0.0),
        "E_R(F,F)": (reaction.energy(vals), rho_n * q_n),
    }
    return F, TestFunctionIdentityReport(n, pairs, tol, n in reaction.info.get("truncated_levels", []))


@dataclass(frozen=True)
class ObstructionReport:
    energy: float
    second_moment: float
    first_moment: float
    energy_bound: float
    implied_c: float | None


def superpoincare_obstruction_bound(gen: ReversibleGenerator, space: ConfigSpace, mu1: SingleSiteMeasure, f,
                                    r: float | None = None, beta: float | None = None) -> ObstructionReport:
    """Test F(gamma) = gamma(f) on level 1 (0 elsewhere).

    If pi(F^2) <= r E(F,F) + beta pi(|F|)^2 held, then mu1(f^2) <= c mu1(f)^2
    with c = beta rho_1^2 / (rho_1 - r (rho_0 v rho_1) q_1); this is returned as
    ``implied_c`` when the denominator is positive.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise InvalidSpecError("obstruction test needs f >= 0")
    F = np.zeros(len(space))
    for i in space.level(1):
        F[i] = float(np.dot(space.configs[i], f))
    w = gen.info["rho"]
    q1 = float(gen.info["level_rates"][1])
    bound = max(w[0], w[1]) * q1 * float(mu1.probs @ f**2)
    c = None
    if r is not None and beta is not None:
        denom = w[1] - r * max(w[0], w[1]) * q1
        if denom > 0:
            c = beta * w[1] ** 2 / denom
    return ObstructionReport(gen.energy(F), float(gen.pi @ F**2), float(gen.pi @ np.abs(F)), bound, c)


def obstruction_growth(Ks=(2, 4, 8, 16)) -> dict:
    """mu1(f^2)/mu1(f)^2 for f = 1_{x=1} under uniform mu1 on K sites, with the
    reaction model checked at N = 1 for each K."""
    out = {}
    for K in Ks:
        mu1 = SingleSiteMeasure(np.full(K, 1.0 / K))
        space = enumerate_configs(K, 1)
        Q = RateMatrix([[0.0, 1.0], [1.0, 0.0]])
        rho = ReversibleMeasure([0.5, 0.5])
        gen = build_reaction_qpair(space, product_family(mu1, 1), Q, rho)
        f = np.zeros(K)
        f[0] = 1.0
        rep = superpoincare_obstruction_bound(gen, space, mu1, f)
        out[K] = {"ratio": float(mu1.probs @ f**2 / (mu1.probs @ f) ** 2),
                  "pi_F2": rep.second_moment, "pi_absF": rep.first_moment}
    return out


# -- model bundle ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Model:
    """Everything assembled from one model description."""

    space: ConfigSpace
    fam: SymmetricFamily
    Q: RateMatrix
    rho: ReversibleMeasure
    reaction: ReversibleGenerator
    chain: ReversibleGenerator
    site: SingleSiteGenerator | None = None
    diffusion: ReversibleGenerator | None = None

    @property
    def combined(self) -> ReversibleGenerator:
        return combined_generator(self.reaction, self.diffusion)

    def level_generators(self) -> list:
        if self.site is None:
            return []
        return [product_site_generator(self.site, n) for n in range(1, self.space.N + 1)]


def assemble_model(K, N, Q, rho, fam, site_rates=None, max_states=None, death_rule="uniform") -> Model:
    kw = {} if max_states is None else {"max_states": max_states}
    space = enumerate_configs(K, N, **kw)
    Qn, rhon, _ = truncate_chain(Q, rho, N)
    reaction = build_reaction_qpair(space, fam, Q, rho, death_rule=death_rule)
    site = diffusion = None
    if site_rates is not None:
        if fam.mode != "product":
            raise InvalidSpecError("diffusion needs a product reference family")
        site = SingleSiteGenerator(site_rates, fam.mu1)
        diffusion = build_diffusion_generator(space, site, rhon, fam)
    return Model(space, fam, Qn, rhon, reaction, chain_generator(Qn, rhon), site, diffusion)
