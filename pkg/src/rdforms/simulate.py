"""Gillespie simulation of a reversible jump structure.

Random numbers come from numpy's Philox4x64 counter-based generator.  The key
is derived from ``SeedSequence(seed)``; trajectory ``i`` uses the stream
advanced by ``jumped(i)`` (i * 2^128 draws), so trajectories are independent and
reproducible on their own.  Each jump consumes one standard exponential (the
holding time, scaled by 1/q) followed by one uniform (the target), both drawn
in blocks of 4096 in that order.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpecError
from .forms import ReversibleGenerator

BLOCK = 4096
MIN_JUMPS = 1000
Z_THRESHOLD = 4.0


@dataclass(frozen=True)
class SimConfig:
    seed: int
    horizon: float
    burn_in: float = 0.0
    trajectory_count: int = 1

    def __post_init__(self):
        if not self.horizon > 0:
            raise InvalidSpecError(f"horizon must be positive, got {self.horizon}")
        if not 0 <= self.burn_in < self.horizon:
            raise InvalidSpecError("need 0 <= burn_in < horizon")
        if self.trajectory_count < 1:
            raise InvalidSpecError("trajectory_count must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidSpecError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)
    occupation: np.ndarray = field(repr=False)
    horizon: float
    burn_in: float
    degenerate: bool

    @property
    def n_jumps(self) -> int:
        return self.states.size - 1

    def occupation_measure(self) -> np.ndarray:
        return self.occupation / (self.horizon - self.burn_in)

    def sample(self, dt: float, F) -> np.ndarray:
        """F(X_t) on the grid burn_in, burn_in + dt, ... < horizon."""
        grid = np.arange(self.burn_in, self.horizon, dt)
        idx = np.searchsorted(self.times, grid, side="right") - 1
        return np.asarray(F, dtype=float)[self.states[idx]]

    def csv_rows(self, labels):
        yield ("time", "state")
        for t, s in zip(self.times, self.states):
            yield (repr(float(t)), labels[s])

    def to_bytes(self) -> bytes:
        return self.times.tobytes() + self.states.tobytes()


def rng_stream(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))).jumped(index))


def horizon_for_jumps(gen: ReversibleGenerator, jumps: float) -> float:
    """Time needed for ``jumps`` expected jumps in stationarity: jumps / sum pi q."""
    rate = float(gen.pi @ gen.total_rates)
    if rate == 0:
        raise InvalidSpecError("generator has no jumps")
    return jumps / rate


def default_burn_in(horizon: float, gap: float | None = None) -> float:
    """10/gap when the gap is known and leaves room, else 5% of the horizon."""
    if gap is not None and gap > 0 and 10.0 / gap < 0.5 * horizon:
        return 10.0 / gap
    return 0.05 * horizon


def gillespie(gen: ReversibleGenerator, cfg: SimConfig, index: int = 0, start: int | None = None) -> Trajectory:
    """One trajectory on [0, horizon], started from a pi-draw unless ``start`` is given."""
    rng = rng_stream(cfg.seed, index)
    R = gen.rate_matrix()
    q = np.asarray(R.sum(axis=1)).ravel()
    indptr, indices = R.indptr, R.indices
    cum = np.empty_like(R.data)
    for i in range(gen.n_states):
        a, b = indptr[i], indptr[i + 1]
        if b > a:
            cum[a:b] = np.cumsum(R.data[a:b]) / q[i]
    if start is None:
        start = int(np.searchsorted(np.cumsum(gen.pi), rng.random() * gen.pi.sum(), side="right"))
        start = min(start, gen.n_states - 1)
    occ = np.zeros(gen.n_states)
    times = [0.0]
    states = [start]
    t, x = 0.0, start
    degenerate = not np.any(q > 0)
    ex = rng.standard_exponential(BLOCK)
    un = rng.random(BLOCK)
    k = 0
    while True:
        if q[x] == 0:
            hold = np.inf
        else:
            if k == BLOCK:
                ex = rng.standard_exponential(BLOCK)
                un = rng.random(BLOCK)
                k = 0
            hold = ex[k] / q[x]
        t_next = t + hold
        lo, hi = max(t, cfg.burn_in), min(t_next, cfg.horizon)
        if hi > lo:
            occ[x] += hi - lo
        if t_next >= cfg.horizon:
            break
        a, b = indptr[x], indptr[x + 1]
        j = a + int(np.searchsorted(cum[a:b], un[k], side="right"))
        k += 1
        x = int(indices[min(j, b - 1)])
        t = t_next
        times.append(t)
        states.append(x)
    return Trajectory(np.array(times), np.array(states, dtype=np.int64), occ, cfg.horizon, cfg.burn_in, degenerate)


def simulate(gen: ReversibleGenerator, cfg: SimConfig) -> list[Trajectory]:
    return [gillespie(gen, cfg, index=i) for i in range(cfg.trajectory_count)]


def total_variation(traj: Trajectory, pi) -> float:
    return 0.5 * float(np.sum(np.abs(traj.occupation_measure() - np.asarray(pi))))


@dataclass(frozen=True)
class FluxSymmetryEmpirical:
    verdict: str
    edges: list
    max_z: float
    threshold: float
    n_jumps: int

    def flagged(self) -> list:
        return [e for e in self.edges if e["status"] == "fail"]

    def to_json(self):
        return {
            "verdict": self.verdict,
            "max_z": self.max_z,
            "threshold": self.threshold,
            "n_jumps": self.n_jumps,
            "edges_tested": len(self.edges),
            "flagged": self.flagged(),
            "note": f"per-edge threshold z < {self.threshold:g}; a Bonferroni level over "
                    f"{len(self.edges)} edges is about {min(1.0, len(self.edges) * 6.3e-5):.2g}",
        }


def empirical_flux_symmetry(traj: Trajectory, gen: ReversibleGenerator, threshold: float = Z_THRESHOLD):
    """Compare jump counts gamma -> eta and eta -> gamma along the path.

    Under reversibility both counts have the same mean; z = |n_ab - n_ba| /
    sqrt(n_ab + n_ba) is approximately standard normal.
    """
    if traj.n_jumps < MIN_JUMPS:
        return FluxSymmetryEmpirical("inconclusive", [], 0.0, threshold, traj.n_jumps)
    n = gen.n_states
    src, dst = traj.states[:-1], traj.states[1:]
    keep = traj.times[1:] >= traj.burn_in
    counts = np.zeros((n, n))
    np.add.at(counts, (src[keep], dst[keep]), 1.0)
    edges = []
    coo = gen.flux.tocoo()
    support = set()
    for i, j in zip(coo.row, coo.col):
        support.add((min(i, j), max(i, j)))
    labels = gen.labels or tuple(str(i) for i in range(n))
    max_z = 0.0
    for a, b in sorted(support):
        nab, nba = counts[a, b], counts[b, a]
        if nab + nba == 0:
            edges.append({"edge": [labels[a], labels[b]], "n_ab": 0, "n_ba": 0, "z": None, "status": "no data"})
            continue
        z = abs(nab - nba) / np.sqrt(nab + nba)
        max_z = max(max_z, z)
        edges.append({"edge": [labels[a], labels[b]], "n_ab": int(nab), "n_ba": int(nba), "z": float(z),
                      "status": "pass" if z < threshold else "fail"})
    verdict = "fail" if any(e["status"] == "fail" for e in edges) else "pass"
    return FluxSymmetryEmpirical(verdict, edges, float(max_z), threshold, traj.n_jumps)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    band: tuple
    r2: float
    lags: np.ndarray = field(repr=False)
    autocov: np.ndarray = field(repr=False)
    batch_rates: np.ndarray = field(repr=False)

    def to_json(self):
        return {"rate": self.rate, "band": list(self.band), "r2": self.r2}


def _autocov(x, max_lag):
    x = x - x.mean()
    n = x.size
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, size)
    ac = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1]
    return ac / (n - np.arange(max_lag + 1))


def _fit(lags, ac):
    pos = ac > 0
    # stop at the first nonpositive value: beyond it the estimate is noise
    if not np.all(pos):
        stop = int(np.argmin(pos))
        lags, ac = lags[:stop], ac[:stop]
    if lags.size < 3:
        return np.nan, 0.0
    y = np.log(ac)
    w = ac / ac[0]
    A = np.vstack([np.ones_like(lags), lags]).T
    W = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * W[:, None], y * W, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum(w * (y - pred) ** 2))
    ss_tot = float(np.sum(w * (y - np.average(y, weights=w)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return -float(coef[1]), r2


def decay_rate_estimate(gen: ReversibleGenerator, cfg: SimConfig, observable, gap: float | None = None,
                        batches: int = 10) -> DecayFit:
    """Exponential rate of the autocovariance of a centered observable."""
    F = np.asarray(observable, dtype=float)
    mean = float(gen.pi @ F)
    var = float(gen.pi @ (F - mean) ** 2)
    if var < 1e-14:
        raise InvalidSpecError("observable is constant under pi; its autocovariance vanishes")
    F = F - mean
    traj = gillespie(gen, cfg)
    qmax = float(np.max(gen.total_rates))
    window = 5.0 / gap if gap else 0.1 * (cfg.horizon - cfg.burn_in)
    dt = min(0.25 / qmax, window / 40.0)
    x = traj.sample(dt, F)
    max_lag = max(3, int(window / dt))
    lags = np.arange(max_lag + 1) * dt
    ac = _autocov(x, max_lag)
    rate, r2 = _fit(lags, ac)
    rates = []
    for chunk in np.array_split(x, batches):
        if chunk.size > 4 * max_lag:
            rb, _ = _fit(lags, _autocov(chunk, max_lag))
            if np.isfinite(rb):
                rates.append(rb)
    rates = np.array(rates)
    half = 2.0 * rates.std(ddof=1) / np.sqrt(rates.size) if rates.size > 1 else np.inf
    if r2 < 0.9:
        warnings.warn(f"autocovariance is not exponential (R^2 = {r2:.3f})")
    return DecayFit(rate, (rate - half, rate + half), r2, lags, ac, rates)
