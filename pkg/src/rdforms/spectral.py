"""Spectral gap, Dirichlet eigenvalue, phi-variance, lambda_phi and the log-Sobolev constant.

Eigenproblems are solved on the symmetrized matrix
S = D^{-1/2} (diag(J 1) - J) D^{-1/2}, D = diag(pi), restricted to the support
of pi.  The variational constants (lambda_phi, L) are infima of nonconvex ratios
and are reported as the best value found by multi-start descent, which is an
upper bound, together with a stationarity residual.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize, minimize_scalar
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import ConvergenceError, InvalidSpecError, SymmetryError
from .forms import DENSE_LIMIT, ReversibleGenerator

P_MAX = 2.0 - 1e-4
GRID_POINTS = 64
DEFAULT_STARTS = 32
ASYM_TOL = 1e-10
SANDWICH_TOL = 1e-9
PHI_SLACK = 1e-4


# -- phi profiles ------------------------------------------------------------------


@dataclass(frozen=True)
class PhiProfile:
    """Continuous nonincreasing phi on [1, 2], positive on [1, 2).

    ``slope`` is lim_{p->2} phi(p)/(2-p) when phi(2) = 0 (inf if phi vanishes
    more slowly than linearly, in which case the p -> 2 limit of the ratio is 0).
    """

    name: str
    func: Callable = field(repr=False)
    slope: float | None = None

    def __post_init__(self):
        grid = np.linspace(1.0, 2.0, 1001)
        vals = np.asarray(self.func(grid), dtype=float)
        if np.any(np.diff(vals) > 1e-12):
            raise InvalidSpecError(f"phi profile {self.name!r} is not nonincreasing on [1, 2]")
        if np.any(vals[:-1] <= 0):
            raise InvalidSpecError(f"phi profile {self.name!r} must be positive on [1, 2)")

    def __call__(self, p):
        return self.func(np.asarray(p, dtype=float))

    @property
    def vanishes_at_two(self) -> bool:
        return float(self.func(np.array(2.0))) == 0.0

    @classmethod
    def one(cls):
        return cls("one", lambda p: np.ones_like(p, dtype=float))

    @classmethod
    def logsob(cls):
        return cls("logsob", lambda p: (2.0 - p) / p, slope=0.5)

    @classmethod
    def power(cls, alpha: float):
        if not 0 < alpha <= 1:
            raise InvalidSpecError("power profile needs alpha in (0, 1]")
        return cls(f"power:{alpha:g}", lambda p: np.clip(2.0 - p, 0.0, None) ** alpha,
                   slope=1.0 if alpha == 1 else np.inf)

    @classmethod
    def tabulated(cls, ps, values, name="tabulated"):
        ps = np.asarray(ps, dtype=float)
        vals = np.asarray(values, dtype=float)
        if ps[0] != 1.0 or ps[-1] != 2.0 or np.any(np.diff(ps) <= 0):
            raise InvalidSpecError("tabulated phi needs increasing nodes from 1 to 2")
        slope = None
        if vals[-1] == 0.0:
            slope = vals[-2] / (2.0 - ps[-2])
        return cls(name, lambda p: np.interp(p, ps, vals), slope=slope)

    @classmethod
    def parse(cls, text: str):
        if text == "one":
            return cls.one()
        if text == "logsob":
            return cls.logsob()
        if text.startswith("power:"):
            return cls.power(float(text.split(":", 1)[1]))
        raise InvalidSpecError(f"unknown phi profile {text!r}")

    def limit_ratio(self) -> float:
        """sup_p (2 - p)/phi(p), the factor linking lambda_phi to the gap near constants."""
        ps = _cheb_grid(GRID_POINTS * 4)
        best = float(np.max((2.0 - ps) / self(ps)))
        if self.vanishes_at_two and self.slope is not None:
            best = max(best, 1.0 / self.slope)
        return best


def _cheb_grid(n: int) -> np.ndarray:
    k = np.arange(n)
    x = np.cos(np.pi * k / (n - 1))[::-1]
    return 1.0 + (P_MAX - 1.0) * (x + 1.0) / 2.0


# -- entropy and phi-variance ------------------------------------------------------------


def _h(u):
    """u log u - u + 1, accurate near u = 1."""
    u = np.asarray(u, dtype=float)
    d = u - 1.0
    out = np.empty_like(u)
    small = np.abs(d) < 1e-2
    ds = d[small]
    acc = np.zeros_like(ds)
    for k in range(12, 1, -1):
        acc = acc + (-1) ** k * ds**k / (k * (k - 1))
    out[small] = acc
    ub = u[~small]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[~small] = np.where(ub > 0, ub * np.log(np.where(ub > 0, ub, 1.0)), 0.0) - ub + 1.0
    return out


def entropy(pi, F) -> float:
    """Ent_pi(F^2), computed as pi(F^2) * sum pi h(F^2/pi(F^2)) to avoid cancellation."""
    pi = np.asarray(pi, dtype=float)
    f2 = np.asarray(F, dtype=float) ** 2
    m = float(pi @ f2)
    if m == 0:
        return 0.0
    return m * float(pi @ _h(f2 / m))


def _pow_defect(d, s):
    """(1 + d)^s - 1 - s d, by binomial series for small |d|."""
    out = np.empty(np.broadcast_shapes(d.shape, s.shape))
    dd = np.broadcast_to(d, out.shape)
    ss = np.broadcast_to(s, out.shape)
    small = np.abs(dd) < 0.1
    ds, sv = dd[small], ss[small]
    c = sv * (sv - 1.0) / 2.0
    term = c * ds**2
    acc = term.copy()
    for k in range(2, 16):
        c = c * (sv - k) / (k + 1)
        acc += c * ds ** (k + 1)
    out[small] = acc
    db, sb = dd[~small], ss[~small]
    with np.errstate(divide="ignore"):
        out[~small] = np.expm1(sb * np.log1p(db)) - sb * db
    return out


def _vphi_profile(pi, F, ps, phis):
    """Numerators pi(F^2) - pi(|F|^p)^{2/p} over a p-grid, divided by phi.

    Written as -m expm1((2/p) log1p(pi(u^{p/2} - 1 - (p/2)(u - 1)))) with
    u = F^2/m, which keeps full relative accuracy for nearly constant |F|.
    """
    a2 = np.asarray(F, dtype=float) ** 2
    m2 = float(pi @ a2)
    if m2 == 0:
        return np.zeros(ps.size), np.zeros(ps.size)
    d = a2 / m2 - 1.0
    sv = (ps / 2.0)[:, None]
    t = _pow_defect(d[None, :], sv) @ pi
    g = (2.0 / ps) * np.log1p(t)
    A = np.exp((ps / 2.0) * np.log(m2) + np.log1p(t))
    return -m2 * np.expm1(g) / phis, A


def phi_variance(pi, f, profile: PhiProfile, tol: float = 1e-8, return_argmax: bool = False):
    """V_phi(f) = sup_{p in [1,2)} (pi(f^2) - pi(|f|^p)^{2/p}) / phi(p).

    Evaluated on Chebyshev-Lobatto grids on [1, 2 - 1e-4] that double until the
    sup moves by less than ``tol``, then polished by a bounded scalar search; the
    analytic p -> 2 limit Ent(f^2)/(2 slope) is included when phi(2) = 0.
    """
    pi = np.asarray(pi, dtype=float)
    f = np.asarray(f, dtype=float)
    n = GRID_POINTS
    prev = None
    for _ in range(6):
        ps = _cheb_grid(n)
        vals, _ = _vphi_profile(pi, f, ps, profile(ps))
        k = int(np.argmax(vals))
        best, p_best = float(vals[k]), float(ps[k])
        if prev is not None and abs(best - prev) < tol:
            break
        prev = best
        n = 2 * n - 1
    lo, hi = ps[max(k - 1, 0)], ps[min(k + 1, ps.size - 1)]
    if hi > lo:
        res = minimize_scalar(lambda p: -_vphi_profile(pi, f, np.array([p]), profile(np.array([p])))[0][0],
                              bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        if -res.fun > best:
            best, p_best = float(-res.fun), float(res.x)
    if profile.vanishes_at_two and profile.slope is not None:
        lim = entropy(pi, f) / (2.0 * profile.slope) if np.isfinite(profile.slope) else 0.0
        if lim >= best:
            best, p_best = lim, 2.0
    return (best, p_best) if return_argmax else best


class _Ratio:
    """E(F)/V(F) with gradient for a generator restricted to its support."""

    def __init__(self, pi, L, kind, profile=None):
        self.pi = pi
        self.L = L
        self.kind = kind
        self.profile = profile
        # points this close to constant are left to the analytic near-constant limit
        self.floor = 1e-13
        if kind == "phi":
            self.ps = _cheb_grid(GRID_POINTS)
            self.phis = profile(self.ps)
            self.use_limit = profile.vanishes_at_two and profile.slope is not None and np.isfinite(profile.slope)

    def energy(self, F):
        LF = self.L @ F
        return float(F @ LF), 2.0 * LF

    def denom(self, F):
        pi = self.pi
        if self.kind == "ent":
            m = float(pi @ F**2)
            if m == 0:
                return 0.0, np.zeros_like(F)
            f2 = F**2
            with np.errstate(divide="ignore", invalid="ignore"):
                lg = np.where(f2 > 0, np.log(np.where(f2 > 0, f2 / m, 1.0)), 0.0)
            return entropy(pi, F), 2.0 * pi * F * lg
        vals, A = _vphi_profile(pi, F, self.ps, self.phis)
        k = int(np.argmax(vals))
        best = float(vals[k])
        if self.use_limit:
            d, g = _Ratio(pi, None, "ent").denom(F)
            lim = d / (2.0 * self.profile.slope)
            if lim >= best:
                return lim, g / (2.0 * self.profile.slope)
        p = self.ps[k]
        a = np.abs(F)
        grad = 2.0 * pi * F
        if A[k] > 0:
            grad = grad - 2.0 * A[k] ** ((2.0 - p) / p) * pi * np.power(a, p - 1.0) * np.sign(F)
        return best, grad / self.phis[k]

    def __call__(self, F):
        e, ge = self.energy(F)
        v, gv = self.denom(F)
        m = float(self.pi @ F**2)
        if v <= self.floor * max(m, 1e-300):
            return 1e6, np.zeros_like(F)
        return e / v, (ge * v - e * gv) / v**2


def _support(gen: ReversibleGenerator):
    idx = np.flatnonzero(gen.pi > 0)
    J = gen.flux[idx][:, idx]
    return idx, gen.pi[idx], sp.csr_matrix(J)


def _laplacian(J):
    deg = np.asarray(J.sum(axis=1)).ravel()
    return sp.csr_matrix(sp.diags(deg) - J)


def _symmetrized(pi, J):
    asym = abs(J - J.T).max() if J.nnz else 0.0
    if asym > ASYM_TOL:
        raise SymmetryError(f"flux asymmetry {asym:.3e} exceeds {ASYM_TOL:g}; cannot symmetrize")
    s = 1.0 / np.sqrt(pi)
    return sp.csr_matrix(sp.diags(s) @ _laplacian(J) @ sp.diags(s))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RDFORMS_THREADS", "1")))
    except ValueError:
        return 1


# -- gap and Dirichlet eigenvalue ------------------------------------------------------------


@dataclass(frozen=True)
class GapResult:
    gap: float
    certificate: np.ndarray
    eigenvalues: np.ndarray
    reducible: bool
    components: np.ndarray | None
    rayleigh_residual: float

    def to_json(self):
        return {
            "gap": self.gap,
            "reducible": self.reducible,
            "rayleigh_residual": self.rayleigh_residual,
            "certificate": self.certificate.tolist(),
        }


def _lowest(S, k):
    n = S.shape[0]
    if n <= DENSE_LIMIT:
        w, v = np.linalg.eigh(S.toarray())
        return w[:k], v[:, :k]
    try:
        w, v = eigsh(S, k=k, sigma=-1e-6, which="LM")
    except (ArpackNoConvergence, RuntimeError) as exc:
        raise ConvergenceError(f"sparse eigen solve failed on {n} states: {exc}") from exc
    order = np.argsort(w)
    return w[order], v[:, order]


def rayleigh_quotient(gen: ReversibleGenerator, F) -> float:
    F = np.asarray(F, dtype=float)
    var = float(gen.pi @ F**2 - (gen.pi @ F) ** 2)
    return gen.energy(F) / var


def spectral_gap(gen: ReversibleGenerator) -> GapResult:
    """Second-smallest eigenvalue of -L; 0 with a component witness if reducible."""
    idx, pi, J = _support(gen)
    n = idx.size
    full = np.zeros(gen.n_states)
    if n < 2:
        return GapResult(np.inf, full, np.array([0.0]), False, None, 0.0)
    S = _symmetrized(pi, J)
    ncomp, comp = connected_components(J > 0, directed=False)
    if ncomp > 1:
        full[idx] = (comp == comp[0]).astype(float)
        labels = np.full(gen.n_states, -1)
        labels[idx] = comp
        return GapResult(0.0, full, np.zeros(ncomp), True, labels, 0.0)
    w, v = _lowest(S, min(n, 4))
    cert = v[:, 1] / np.sqrt(pi)
    full[idx] = cert
    gap = float(w[1])
    rq = rayleigh_quotient(gen, full)
    if not np.isfinite(gap) or gap < -1e-9:
        cond = float(np.max(pi) / np.min(pi))
        raise ConvergenceError(f"eigen solve returned gap {gap!r} (pi ratio {cond:.3e})")
    return GapResult(max(gap, 0.0), full, w, False, None, abs(rq - gap))


def lambda_zero(gen: ReversibleGenerator, pinned: int) -> float:
    """Smallest eigenvalue of -L on functions vanishing at ``pinned``."""
    if not 0 <= pinned < gen.n_states:
        raise InvalidSpecError(f"pinned state {pinned} outside 0..{gen.n_states - 1}")
    idx, pi, J = _support(gen)
    if gen.pi[pinned] == 0:
        raise InvalidSpecError("pinned state lies outside the support of pi")
    S = _symmetrized(pi, J).toarray()
    keep = idx != pinned
    if not np.any(keep):
        return np.inf
    return float(np.linalg.eigvalsh(S[np.ix_(keep, keep)])[0])


# -- lambda_phi and log-Sobolev --------------------------------------------------------------


@dataclass(frozen=True)
class VariationalResult:
    value: float
    certificate: np.ndarray
    stationarity: float
    converged: bool
    starts: int
    seed: int
    source: str
    candidates: list = field(default_factory=list, repr=False)

    def to_json(self):
        return {
            "value": self.value,
            "stationarity_residual": self.stationarity,
            "converged": self.converged,
            "starts": self.starts,
            "seed": self.seed,
            "source": self.source,
        }


def _starts(pi, gap_res, idx, n_starts, seed, extra):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out = []
    vecs = []
    if gap_res is not None and not gap_res.reducible:
        vecs.append(gap_res.certificate[idx])
    for v in vecs:
        v = v / np.sqrt(pi @ v**2)
        out.append(("eigen", v))
        for c in (0.3, 1.0, 3.0):
            out.append(("eigen-shift", 1.0 + c * v))
            out.append(("eigen-shift", 1.0 - c * v))
    for e in extra or []:
        out.append(("lifted", np.asarray(e, dtype=float)[idx]))
    while len(out) < n_starts:
        k = len(out) % 3
        z = rng.standard_normal(idx.size)
        if k == 0:
            out.append(("random", z))
        elif k == 1:
            out.append(("random-positive", np.exp(z)))
        else:
            out.append(("random-sparse", z * (rng.random(idx.size) < 0.3) + 1e-3 * z))
    return out


def _descend(ratio, F0):
    nrm = np.sqrt(ratio.pi @ F0**2)
    if nrm == 0:
        return np.inf, F0, np.inf, False
    F0 = F0 / nrm
    res = minimize(ratio, F0, jac=True, method="L-BFGS-B", options={"maxiter": 500, "gtol": 1e-10})
    F = res.x
    val, g = ratio(F)
    scale = np.sqrt(ratio.pi @ F**2)
    stat = float(np.linalg.norm(g) * scale / max(abs(val), 1e-300))
    return float(val), F, stat, bool(res.success)


def _variational(gen, kind, profile, starts, seed, extra_starts, exact_denominator):
    idx, pi, J = _support(gen)
    if idx.size < 2:
        return VariationalResult(np.inf, np.zeros(gen.n_states), 0.0, True, 0, seed, "trivial")
    gap_res = spectral_gap(gen)
    if gap_res.reducible:
        full = gap_res.certificate.copy()
        return VariationalResult(0.0, full, 0.0, True, 0, seed, "reducible")
    ratio = _Ratio(pi, _laplacian(J), kind, profile)
    jobs = _starts(pi, gap_res, idx, starts, seed, extra_starts)
    threads = _threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda j: _descend(ratio, j[1]), jobs))
    else:
        results = [_descend(ratio, j[1]) for j in jobs]
    cands = []
    for k, ((src, _), (val, F, stat, ok)) in enumerate(zip(jobs, results)):
        cands.append((val, k, src, F, stat, ok))
    cands.sort(key=lambda c: (c[0], c[1]))
    # near-constant limit: ratio -> gap / sup_p (2-p)/phi(p)
    factor = 2.0 if kind == "ent" else profile.limit_ratio()
    lim_val = gap_res.gap / factor
    v = gap_res.certificate[idx]
    lim_F = 1.0 + 1e-4 * v / np.sqrt(pi @ v**2)
    best = None
    for val, k, src, F, stat, ok in cands[:3]:
        if not np.isfinite(val):
            continue
        exact = exact_denominator(pi, F)
        if exact <= ratio.floor * float(pi @ F**2):
            continue
        e = float(F @ (ratio.L @ F))
        refined = e / exact
        if best is None or refined < best[0]:
            best = (refined, F, stat, ok, src)
    if best is None or lim_val <= best[0]:
        value, F, stat, ok, src = lim_val, lim_F, 0.0, True, "near-constant limit"
    else:
        value, F, stat, ok, src = best
    full = np.zeros(gen.n_states)
    full[idx] = F
    summary = [(float(c[0]), c[2]) for c in cands]
    return VariationalResult(float(value), full, float(stat), ok, len(jobs), seed, src, summary)


def lambda_phi(gen: ReversibleGenerator, profile: PhiProfile, starts: int = DEFAULT_STARTS, seed: int = 0,
               extra_starts=None) -> VariationalResult:
    """inf E(F,F)/V_phi(F) over non-constant F (best value found, an upper bound)."""
    return _variational(gen, "phi", profile, starts, seed, extra_starts,
                        lambda pi, F: phi_variance(pi, F, profile))


@dataclass(frozen=True)
class LogSobolevResult:
    L: float
    C1: float
    C2: float
    certificate: np.ndarray
    stationarity: float
    gap: float
    consistent: bool

    def to_json(self):
        return {"L": self.L, "C1": self.C1, "C2": self.C2, "stationarity_residual": self.stationarity,
                "gap": self.gap, "L_le_gap_over_2": self.consistent, "L_le_2gap": self.L <= 2 * self.gap}


def log_sobolev_constant(gen: ReversibleGenerator, starts: int = DEFAULT_STARTS, seed: int = 0,
                         extra_starts=None) -> LogSobolevResult:
    """Tight L = inf E(F,F)/Ent(F^2) and the defective pair (1/L, 0)."""
    res = _variational(gen, "ent", None, starts, seed, extra_starts, entropy)
    gap = spectral_gap(gen).gap
    L = res.value
    return LogSobolevResult(L, 1.0 / L if L > 0 else np.inf, 0.0, res.certificate, res.stationarity, gap,
                            bool(L <= gap / 2 + 1e-9))


def ls_pair_violations(gen: ReversibleGenerator, C1: float, C2: float, probes) -> np.ndarray:
    """pi(F^2 log F^2) - C1 E(F,F) - C2 for each probe normalized to pi(F^2) = 1."""
    out = []
    for F in probes:
        F = np.asarray(F, dtype=float)
        m = float(gen.pi @ F**2)
        if m == 0:
            continue
        G = F / np.sqrt(m)
        out.append(entropy(gen.pi, G) - C1 * gen.energy(G) - C2)
    return np.array(out)


# -- sandwiches ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class SandwichVerdict:
    passed: bool
    values: dict
    margins: dict
    tol: float
    certificates: dict = field(repr=False, default_factory=dict)
    notes: list = field(default_factory=list)

    def to_json(self):
        return {"passed": self.passed, "values": self.values, "margins": self.margins, "tol": self.tol,
                "notes": self.notes}


def verify_gap_sandwich(chain_gen, reaction_gen, rho0: float, tol: float = SANDWICH_TOL) -> SandwichVerdict:
    """gap(E_Q) >= gap(E_R) >= rho_0 gap(E_Q)."""
    gq = spectral_gap(chain_gen)
    gr = spectral_gap(reaction_gen)
    upper = gq.gap - gr.gap
    lower = gr.gap - rho0 * gq.gap
    notes = []
    if upper > tol:
        notes.append(f"strict: gap(E_R) = {gr.gap:.12g} < gap(E_Q) = {gq.gap:.12g}")
    return SandwichVerdict(
        passed=bool(upper >= -tol and lower >= -tol),
        values={"gap_Q": gq.gap, "gap_R": gr.gap, "rho0_gap_Q": rho0 * gq.gap},
        margins={"upper": upper, "lower": lower},
        tol=tol,
        certificates={"chain": gq.certificate, "reaction": gr.certificate},
        notes=notes,
    )


def verify_lambda_phi_sandwich(chain_gen, combined_gen, level_gens, profile: PhiProfile,
                               slack: float = PHI_SLACK, starts: int = DEFAULT_STARTS, seed: int = 0) -> SandwichVerdict:
    """lambda_phi(E_Q) >= lambda_phi(E) >= lambda_phi(E_Q) ^ inf_n lambda_phi(E_0^(n))."""
    lq = lambda_phi(chain_gen, profile, starts=starts, seed=seed)
    extra = []
    if combined_gen.sizes is not None:
        # lifts of chain functions are admissible on the configuration space
        extra.append(lq.certificate[combined_gen.sizes])
        g = spectral_gap(chain_gen)
        if not g.reducible:
            extra.append(g.certificate[combined_gen.sizes])
    lg = lambda_phi(combined_gen, profile, starts=starts, seed=seed, extra_starts=extra)
    values = {"lambda_Q": lq.value, "lambda_Gamma": lg.value}
    margins = {"left": lq.value - lg.value}
    passed = margins["left"] >= -slack
    notes = []
    if level_gens:
        levels = [lambda_phi(g, profile, starts=starts, seed=seed).value for g in level_gens]
        values["lambda_levels"] = levels
        floor = min(lq.value, min(levels))
        margins["right"] = lg.value - floor
        passed = passed and margins["right"] >= -slack
    else:
        notes.append("no diffusion: only the left inequality is checked")
    return SandwichVerdict(bool(passed), values, margins, slack,
                           {"chain": lq.certificate, "combined": lg.certificate}, notes)
