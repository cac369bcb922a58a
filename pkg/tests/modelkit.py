"""Shared model builders for the test suite."""
import numpy as np

from rdforms.chain import BirthDeathSpec, RateMatrix, ReversibleMeasure, reversible_measure_from_birth_death
from rdforms.forms import assemble_model
from rdforms.measures import SingleSiteMeasure, product_family


def tiny_chain():
    spec = BirthDeathSpec([1.0, 1.0], [1.0, 1.0])
    return spec, spec.rate_matrix(), reversible_measure_from_birth_death(spec.births, spec.deaths)


def tiny_model(diffusion=True):
    _, Q, rho = tiny_chain()
    mu1 = SingleSiteMeasure([0.5, 0.5])
    a = np.array([[0.0, 1.0], [1.0, 0.0]]) if diffusion else None
    return assemble_model(2, 2, Q, rho, product_family(mu1, 2), site_rates=a)


def star_chain(beta):
    """Center 1 with leaves 0, 2, 3, 4: q_{1,k} = beta, q_{k,1} = 1/2."""
    q = np.zeros((5, 5))
    for k in (0, 2, 3, 4):
        q[1, k] = beta
        q[k, 1] = 0.5
    r1 = 1.0 / (1.0 + 2.0 * 4 * beta)
    w = np.full(5, 2.0 * r1 * beta)
    w[1] = r1
    return RateMatrix(q), ReversibleMeasure(w / w.sum())


def random_mu1(rng, K, floor=0.05):
    p = rng.dirichlet(np.ones(K)) + floor
    return SingleSiteMeasure(p / p.sum())


def random_site_rates(rng, mu1):
    """a(x, y) = s_xy / mu(x) with s symmetric, so mu(x) a(x, y) is symmetric."""
    K = mu1.probs.size
    s = rng.uniform(0.2, 1.5, (K, K))
    s = np.triu(s, 1)
    s = s + s.T
    return s / mu1.probs[:, None]


def random_model(rng, K=None, N=None, diffusion=False):
    K = K or int(rng.integers(1, 4))
    N = N or int(rng.integers(1, 5))
    spec = BirthDeathSpec(rng.uniform(0.2, 2.0, N), rng.uniform(0.2, 2.0, N))
    rho = reversible_measure_from_birth_death(spec.births, spec.deaths)
    mu1 = random_mu1(rng, K)
    a = random_site_rates(rng, mu1) if diffusion and K > 1 else None
    return assemble_model(K, N, spec.rate_matrix(), rho, product_family(mu1, N), site_rates=a)


def brute_energy(gen, F):
    """1/2 sum_{g,h} J(g,h) (F(g) - F(h))^2 from the dense flux."""
    J = gen.dense_flux()
    F = np.asarray(F, dtype=float)
    return 0.5 * float(np.sum(J * (F[:, None] - F[None, :]) ** 2))


def brute_entropy(pi, F):
    f2 = np.asarray(F, dtype=float) ** 2
    m = float(pi @ f2)
    terms = [p * v * np.log(v) for p, v in zip(pi, f2) if v > 0]
    return float(sum(terms)) - m * np.log(m)
