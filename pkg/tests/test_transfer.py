import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rdforms.errors import InvalidSpecError
from rdforms.forms import product_site_generator
from rdforms.spectral import PhiProfile, lambda_phi, log_sobolev_constant, spectral_gap
from rdforms.transfer import (
    chain_superpoincare_rate,
    exp_moment,
    ls_extraction_backward,
    ls_rate_function,
    ls_transfer_forward,
    ls_violations,
    moment_constant,
    moment_interpolation_check,
    probe_functions,
    super_ls_extraction_backward,
    super_ls_transfer,
    super_ls_violations,
    super_poincare_transfer,
    super_poincare_violations,
    weak_poincare_transfer,
    weak_poincare_violations,
)


@pytest.fixture(scope="module")
def probes(tiny):
    return probe_functions(tiny.combined, 500, np.random.default_rng(7))


def test_weak_poincare_formula():
    aR = weak_poincare_transfer(lambda r: 1.0 / r, 1 / 3)
    for r in (0.1, 1.0, 7.0):
        assert aR(r) == pytest.approx(36.0 / r)
    assert weak_poincare_transfer(lambda r: 2.5, 0.25)(3.0) == pytest.approx(10.0)
    with pytest.raises(InvalidSpecError):
        weak_poincare_transfer(lambda r: 1.0, 0.0)


def test_weak_poincare_probes_tiny(tiny, probes):
    gap = spectral_gap(tiny.chain).gap
    aR = weak_poincare_transfer(lambda r: 1.0 / gap, tiny.rho.weights[0])
    v = weak_poincare_violations(tiny.reaction, aR, [0.01, 0.1, 1.0], probes)
    assert v.size == 1500 and v.max() <= 1e-9


def test_ls_forward_formula():
    rho = np.array([0.5, 0.3, 0.2])
    assert ls_transfer_forward(2.0, 0.0, 3.0, 0.4, 1.0, rho) == pytest.approx((3.0, 0.4))
    C1, C2 = ls_transfer_forward(2.0, 0.5, 3.0, 0.4, 2.0, rho)
    assert C1 == pytest.approx(max(2.0, 1.25 * 3.0))
    assert C2 == pytest.approx(0.4 * 1.25 + 0.25 * exp_moment(rho, 2.0))
    assert exp_moment(rho, 2.0) == pytest.approx(np.sum(rho * np.exp(2.0 * np.arange(3) - 1)))
    with pytest.raises(InvalidSpecError):
        ls_transfer_forward(1, 1, 1, 1, 0.0, rho)


def test_ls_forward_large_delta():
    rho = np.array([0.5, 0.3, 0.2])
    # C1 tends to C1(E_0) v C1(E_Q); with C2(E_0) = 0 nothing else moves
    C1, _ = ls_transfer_forward(2.0, 0.5, 3.0, 0.4, 50.0, rho)
    assert C1 == pytest.approx(3.0, rel=0.02)
    assert ls_transfer_forward(2.0, 0.0, 3.0, 0.4, 50.0, rho) == pytest.approx((3.0, 0.4))
    # with C2(E_0) > 0 the tail term grows like e^{delta N}/delta once delta is large
    tails = [ls_transfer_forward(2.0, 0.5, 3.0, 0.4, d, rho)[1] for d in (5.0, 10.0, 20.0)]
    assert tails[0] < tails[1] < tails[2]


def test_ls_forward_probes_tiny(tiny, probes):
    Lq = log_sobolev_constant(tiny.chain, starts=8).L
    site = product_site_generator(tiny.site, 1)
    Ls = log_sobolev_constant(site, starts=8).L
    mumin = tiny.site.mu1.probs.min()
    C1, C2 = ls_transfer_forward(0.5 / Ls, 0.5 * np.log(1 / mumin), 1 / Lq, 0.0, 1.0, tiny.rho)
    assert ls_violations(tiny.combined, C1, C2, probes).max() <= 1e-9


def test_ls_extraction_tiny(tiny):
    L = log_sobolev_constant(tiny.combined, starts=16).L
    ex = ls_extraction_backward(1 / L, 0.0, tiny.Q.total_rates, tiny.rho)
    assert ex.chain == (1 / L, 0.0)
    rng = np.random.default_rng(3)
    assert ls_violations(tiny.chain, *ex.chain, probe_functions(tiny.chain, 300, rng)).max() <= 1e-9
    site = product_site_generator(tiny.site, 1)
    assert ls_violations(site, *ex.site, probe_functions(site, 300, rng)).max() <= 1e-9


def test_ls_extraction_geometric_tail():
    N = 30
    w = 2.0 ** -np.arange(N + 1)
    w /= w.sum()
    q = np.ones(N + 1)
    ex = ls_extraction_backward(1.0, 0.5, q, w)
    assert ex.argmin_level == N
    A = np.log(w[0]) + 1.0 + 0.5
    assert ex.site[1] == pytest.approx(A / N - np.log(2), abs=1e-12)


def test_ls_extraction_large_C2():
    w = np.array([0.4, 0.3, 0.2, 0.1])
    ex = ls_extraction_backward(1.0, 1e6, np.ones(4), w)
    # C2/n is smallest at the top level
    assert ex.argmin_level == 3
    assert ex.site[1] == pytest.approx(1e6 / 3, rel=1e-5)


def test_super_ls_zero_site_rate():
    bQ = lambda r: 1.0 / r
    rho = np.array([0.5, 0.5])
    verbatim = super_ls_transfer(lambda r: 0.0, bQ, 1.0, rho, verbatim=True)
    corrected = super_ls_transfer(lambda r: 0.0, bQ, 1.0, rho)
    for r in (0.3, 2.0):
        assert verbatim(r) == pytest.approx(bQ(1.0))
        assert corrected(r) == pytest.approx(bQ(r))


def test_super_ls_constant_site_rate_verbatim_is_constant():
    beta = super_ls_transfer(lambda r: 0.7, lambda r: 1.0 / r, 2.0, np.array([0.2, 0.8]), verbatim=True)
    assert beta(0.1) == pytest.approx(beta(10.0))


def test_super_ls_tail_term_in_delta():
    w = np.full(3, 1 / 3)
    tail = lambda d: exp_moment(w, d) / d
    assert tail(0.5) < tail(0.25)
    # not monotone: past the minimum doubling delta increases it
    assert tail(2.0) > tail(1.0)


def test_super_ls_probes_tiny(tiny, probes):
    site = product_site_generator(tiny.site, 1)
    b0 = ls_rate_function(log_sobolev_constant(site, starts=8).L * 0.99, tiny.site.mu1.probs.min())
    bQ = ls_rate_function(log_sobolev_constant(tiny.chain, starts=8).L * 0.99, tiny.rho.weights.min())
    beta = super_ls_transfer(b0, bQ, 1.0, tiny.rho)
    assert super_ls_violations(tiny.combined, beta, [0.05, 0.3, 1.0, 3.0], probes).max() <= 1e-9


def test_super_ls_backward_tiny(tiny):
    L = log_sobolev_constant(tiny.combined, starts=16).L * 0.99
    b0 = super_ls_extraction_backward(ls_rate_function(L, tiny.combined.pi.min()), tiny.Q.total_rates, tiny.rho)
    site = product_site_generator(tiny.site, 1)
    sp = probe_functions(site, 300, np.random.default_rng(5))
    assert super_ls_violations(site, b0, [0.05, 0.3, 1.0, 3.0], sp).max() <= 1e-9


def test_ls_rate_function_valid(tiny, probes):
    L = log_sobolev_constant(tiny.combined, starts=16).L
    beta = ls_rate_function(L, tiny.combined.pi.min())
    assert beta(1 / L) == 0.0 and beta(0.0) == pytest.approx(np.log(1 / tiny.combined.pi.min()))
    assert super_ls_violations(tiny.combined, beta, [0.0, 0.5 / L, 1 / L, 5.0], probes).max() <= 1e-9


def test_moment_constant():
    assert moment_constant(1.0) == pytest.approx(32.0)
    assert moment_constant(1.5) == pytest.approx((4 / 3) * (8 / 3) ** 6)
    assert np.isinf(moment_constant(2.0))


def test_moment_check_examples():
    pi = np.array([0.2, 0.3, 0.5])
    assert moment_interpolation_check(pi, np.full(3, 1.7), 1.0) >= 0
    assert moment_interpolation_check(pi, np.full(3, 1.7), 1.0) == pytest.approx(1.7**2 * 31.5)
    with pytest.raises(InvalidSpecError):
        moment_interpolation_check(pi, np.ones(3), 2.0)
    with pytest.raises(InvalidSpecError):
        moment_interpolation_check(pi, np.ones(3), 0.5)


@given(
    st.lists(st.floats(0.001, 1.0), min_size=1, max_size=8),
    st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=8, max_size=8),
    st.floats(1.0, 1.999),
)
@settings(max_examples=300, deadline=None)
def test_moment_interpolation_property(w, h, p):
    pi = np.array(w) / np.sum(w)
    assert moment_interpolation_check(pi, np.array(h[: pi.size]), p) >= -1e-12


def test_chain_superpoincare_rate_valid(tiny):
    gap = spectral_gap(tiny.chain).gap
    beta = chain_superpoincare_rate(gap, tiny.rho.weights.min())
    rng = np.random.default_rng(1)
    pr = probe_functions(tiny.chain, 300, rng)
    assert super_poincare_violations(tiny.chain, beta, [0.01, 0.5, 1 / gap, 10.0], pr).max() <= 1e-9


def test_super_poincare_transfer_monotone_and_tiny_probes(tiny, probes):
    gq = spectral_gap(tiny.chain).gap
    lam = min(lambda_phi(g, PhiProfile.logsob(), starts=8).value for g in tiny.level_generators()) * 0.99
    beta = super_poincare_transfer(chain_superpoincare_rate(gq, tiny.rho.weights.min()), lam, PhiProfile.logsob())
    rs = [0.5, 2.0, 10.0]
    vals = [beta(r) for r in [0.1, 0.5, 2.0, 10.0, 100.0]]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert super_poincare_violations(tiny.combined, beta, rs, probes).max() <= 1e-9


def test_super_poincare_boundary_linear_profile():
    prof = PhiProfile.power(1.0)
    bQ = lambda s: 1.0 + 1.0 / (s + 0.01)
    lam, r = 2.0, 0.5
    beta = super_poincare_transfer(bQ, lam, prof)
    # admissible p satisfy 2 - p <= r lam / 2, i.e. p >= 2 - r lam / 2
    p_star = 2 - r * lam / 2
    ps = np.linspace(p_star, 2 - 1e-4, 20001)
    c = moment_constant(ps)
    c = c[np.isfinite(c) & (c < 1e150)]
    oracle = np.min(2 * c * np.array([bQ(r / (2 * ci)) for ci in c]))
    assert beta(r) == pytest.approx(oracle, rel=1e-3)
    assert np.isinf(super_poincare_transfer(bQ, lam, PhiProfile.logsob())(1e-9))


def test_super_poincare_transfer_errors():
    with pytest.raises(InvalidSpecError):
        super_poincare_transfer(lambda s: 1.0, 1.0, PhiProfile.one())
    with pytest.raises(InvalidSpecError):
        super_poincare_transfer(lambda s: 1.0, 0.0, PhiProfile.logsob())
