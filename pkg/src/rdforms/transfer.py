"""Constant-transfer maps between the level chain, the site form and the
configuration-space form, with probe verifiers for the target inequalities.

Rate functions are plain callables r -> value.  Probe verifiers return the
array of violations (left side minus right side); a valid constant gives
values <= 0 up to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidSpecError
from .spectral import PhiProfile, _cheb_grid, entropy


# -- weak Poincare ----------------------------------------------------------------------


def weak_poincare_transfer(alpha_Q, rho0: float):
    """alpha_R(r) = alpha_Q(rho0 r / 4) / rho0."""
    if not 0 < rho0 <= 1:
        raise InvalidSpecError("rho0 must lie in (0, 1]")
    return lambda r: alpha_Q(rho0 * r / 4.0) / rho0


def weak_poincare_violations(gen, alpha, rs, probes) -> np.ndarray:
    """pi(F^2) - alpha(r) E(F,F) - r ||F||_inf^2 over centered probes and each r."""
    out = []
    for F in probes:
        F = np.asarray(F, dtype=float)
        F = F - gen.pi @ F
        e = gen.energy(F)
        sup2 = float(np.max(F[gen.pi > 0] ** 2))
        m = float(gen.pi @ F**2)
        for r in rs:
            out.append(m - alpha(r) * e - r * sup2)
    return np.array(out)


# -- log-Sobolev ------------------------------------------------------------------------------


def exp_moment(rho, delta: float) -> float:
    """sum_n rho_n exp(delta n - 1)."""
    w = np.asarray(getattr(rho, "weights", rho), dtype=float)
    return float(np.sum(w * np.exp(delta * np.arange(w.size) - 1.0)))


def ls_transfer_forward(C1_0, C2_0, C1_Q, C2_Q, delta, rho):
    """Log-Sobolev pair for the combined form from the site pair and the chain pair."""
    if delta <= 0:
        raise InvalidSpecError("delta must be positive")
    if min(C1_0, C2_0, C1_Q, C2_Q) < 0:
        raise InvalidSpecError("constants must be nonnegative")
    k = 1.0 + C2_0 / delta
    C1 = max(C1_0, k * C1_Q)
    C2 = C2_Q * k + (C2_0 / delta) * exp_moment(rho, delta)
    return C1, C2


@dataclass(frozen=True)
class ExtractedConstants:
    chain: tuple
    site: tuple
    argmin_level: int


def ls_extraction_backward(C1, C2, level_rates, rho) -> ExtractedConstants:
    """Chain pair (C1, C2) and site pair (C1, inf_n (log rho_n + C1 q_n + C2)/n)."""
    w = np.asarray(getattr(rho, "weights", rho), dtype=float)
    q = np.asarray(level_rates, dtype=float)
    n = np.arange(1, w.size)
    vals = (np.log(w[1:]) + C1 * q[1:] + C2) / n
    k = int(np.argmin(vals))
    return ExtractedConstants((C1, C2), (C1, float(vals[k])), int(n[k]))


def ls_violations(gen, C1, C2, probes) -> np.ndarray:
    """pi(F^2 log F^2) - C1 E(F,F) - C2 for probes scaled to pi(F^2) = 1."""
    out = []
    for F in probes:
        F = np.asarray(F, dtype=float)
        m = float(gen.pi @ F**2)
        if m == 0:
            continue
        G = F / np.sqrt(m)
        out.append(entropy(gen.pi, G) - C1 * gen.energy(G) - C2)
    return np.array(out)


def ls_rate_function(L: float, min_weight: float):
    """A valid super log-Sobolev rate from a log-Sobolev constant L on a finite space.

    With pi(F^2) = 1 the entropy is at most log(1/min_weight) and at most E/L;
    interpolating gives beta(r) = (1 - r L)^+ log(1/min_weight).
    """
    top = np.log(1.0 / min_weight)
    return lambda r: max(0.0, 1.0 - r * L) * top


# -- super log-Sobolev ---------------------------------------------------------------------


def super_ls_transfer(beta_0, beta_Q, delta: float, rho, verbatim: bool = False):
    """Rate function for the combined form from the site and chain rates.

    Setting C1(E_0) = r, C2(E_0) = beta_0(r) in the log-Sobolev transfer and
    choosing the chain pair at C1(E_Q) = r delta/(delta + beta_0(r)) gives
    beta(r) = beta_Q(r delta/(delta + beta_0(r))) (1 + beta_0(r)/delta)
              + (beta_0(r)/delta) sum rho_n e^{delta n - 1}.
    ``verbatim=True`` drops the factor r in the chain argument.
    """
    if delta <= 0:
        raise InvalidSpecError("delta must be positive")
    tail = exp_moment(rho, delta)

    def beta(r):
        b0 = beta_0(r)
        arg = delta / (delta + b0)
        if not verbatim:
            arg = r * arg
        return beta_Q(arg) * (1.0 + b0 / delta) + (b0 / delta) * tail

    return beta


def super_ls_extraction_backward(beta, level_rates, rho):
    """Site rate beta_0(r) = inf_n (log rho_n + beta(r) + r q_n)/n."""
    w = np.asarray(getattr(rho, "weights", rho), dtype=float)
    q = np.asarray(level_rates, dtype=float)
    n = np.arange(1, w.size)
    return lambda r: float(np.min((np.log(w[1:]) + beta(r) + r * q[1:]) / n))


def super_ls_violations(gen, beta, rs, probes) -> np.ndarray:
    out = []
    for r in rs:
        out.extend(ls_violations(gen, r, beta(r), probes))
    return np.array(out)


# -- moment interpolation and super Poincare ------------------------------------------------


def moment_constant(p):
    """c(p) = (2/p)(4/p)^{2p/(2-p)}; evaluated in log space, inf at p = 2."""
    p = np.asarray(p, dtype=float)
    with np.errstate(over="ignore", divide="ignore"):
        logc = np.log(2.0 / p) + (2.0 * p / (2.0 - p)) * np.log(4.0 / p)
        return np.exp(logc)


def moment_interpolation_check(pi, h, p: float) -> float:
    """Slack of pi(|h|^p)^{2/p} <= pi(h^2)/2 + c(p) pi(|h|)^2 (nonnegative when it holds)."""
    if not 1 <= p < 2:
        raise InvalidSpecError(f"p = {p} outside [1, 2)")
    pi = np.asarray(pi, dtype=float)
    a = np.abs(np.asarray(h, dtype=float))
    lhs = float(pi @ a**p) ** (2.0 / p)
    with np.errstate(over="ignore", invalid="ignore"):
        rhs = 0.5 * float(pi @ a**2) + float(moment_constant(p)) * float(pi @ a) ** 2
    if not np.isfinite(rhs):
        return np.inf
    return rhs - lhs


def chain_superpoincare_rate(gap: float, min_weight: float):
    """A valid super-Poincare rate on a finite space from its gap.

    pi(f^2) <= E/gap + pi(|f|)^2 and pi(f^2) <= pi(|f|)^2/min_weight; mixing the
    two with weight t = s gap gives beta(s) = t + (1 - t)/min_weight for s < 1/gap.
    """
    def beta(s):
        t = min(1.0, s * gap)
        return t + (1.0 - t) / min_weight

    return beta


def super_poincare_transfer(beta_Q, site_lambda: float, profile: PhiProfile, points: int = 256):
    """beta(r) = inf over p with 2 phi(p)/lambda <= r of 2 c(p) beta_Q(r / (2 c(p))).

    ``site_lambda`` is a lower bound on inf_n lambda_phi of the site forms for a
    profile with phi(2) = 0.  For fixed p the best r_1 is r/(2 c(p)), since
    beta_Q is nonincreasing.  Returns inf when no p is admissible.
    """
    if not profile.vanishes_at_two:
        raise InvalidSpecError("super-Poincare transfer needs a profile with phi(2) = 0")
    if site_lambda <= 0:
        raise InvalidSpecError("site lambda_phi must be positive")
    grid = _cheb_grid(points)

    def beta(r):
        level = r * site_lambda / 2.0
        ps = grid[profile(grid) <= level]
        extra = []
        if profile(np.array(1.0)) <= level:
            extra.append(1.0)
        elif profile(np.array(grid[-1])) <= level:
            # boundary of the admissible set, where phi(p) = r lambda / 2
            extra.append(brentq(lambda p: float(profile(np.array(p))) - level, 1.0, grid[-1], xtol=1e-14))
            extra[-1] = min(extra[-1] + 1e-12, grid[-1])
        ps = np.concatenate([ps, extra])
        ps = ps[profile(ps) <= level]
        if ps.size == 0:
            return np.inf
        c = moment_constant(ps)
        vals = [2.0 * ci * beta_Q(r / (2.0 * ci)) for ci in c if np.isfinite(ci)]
        return float(min(vals)) if vals else np.inf

    return beta


def super_poincare_violations(gen, beta, rs, probes) -> np.ndarray:
    """pi(F^2) - r E(F,F) - beta(r) pi(|F|)^2."""
    out = []
    for F in probes:
        F = np.asarray(F, dtype=float)
        m2 = float(gen.pi @ F**2)
        m1 = float(gen.pi @ np.abs(F))
        e = gen.energy(F)
        for r in rs:
            out.append(m2 - r * e - beta(r) * m1**2)
    return np.array(out)


# -- probes ----------------------------------------------------------------------------------


def probe_functions(gen, count: int, rng: np.random.Generator, extra=()) -> list:
    """A mixed family of test functions: Gaussian, positive, sparse, indicators,
    level lifts and near-constant perturbations."""
    n = gen.n_states
    out = [np.asarray(e, dtype=float) for e in extra]
    sizes = gen.sizes
    kinds = 6
    k = 0
    while len(out) < count:
        kind = k % kinds
        k += 1
        z = rng.standard_normal(n)
        if kind == 0:
            out.append(z)
        elif kind == 1:
            out.append(np.exp(rng.uniform(0.5, 3.0) * z))
        elif kind == 2:
            out.append(z * (rng.random(n) < 0.25))
        elif kind == 3:
            F = np.zeros(n)
            F[rng.integers(n)] = 1.0
            out.append(F)
        elif kind == 4 and sizes is not None:
            r = rng.standard_normal(int(sizes.max()) + 1)
            out.append(r[sizes] + 0.2 * rng.standard_normal() * z)
        else:
            out.append(1.0 + 10.0 ** rng.uniform(-4, 0) * z)
    return out[:count]
