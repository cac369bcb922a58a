import numpy as np
import pytest

from rdforms.chain import RateMatrix, ReversibleMeasure
from rdforms.errors import InvalidSpecError
from rdforms.forms import chain_generator
from rdforms.simulate import (
    SimConfig,
    decay_rate_estimate,
    default_burn_in,
    empirical_flux_symmetry,
    gillespie,
    horizon_for_jumps,
    rng_stream,
    simulate,
    total_variation,
)
from rdforms.spectral import spectral_gap

from modelkit import tiny_model


@pytest.fixture(scope="module")
def reaction():
    return tiny_model(diffusion=False).reaction


def test_config_validation():
    with pytest.raises(InvalidSpecError):
        SimConfig(1, 0.0)
    with pytest.raises(InvalidSpecError):
        SimConfig(1, 10.0, burn_in=10.0)
    with pytest.raises(InvalidSpecError):
        SimConfig(1, 10.0, trajectory_count=0)
    with pytest.raises(InvalidSpecError):
        SimConfig(-1, 10.0)


def test_default_burn_in():
    assert default_burn_in(1000.0, 0.5) == pytest.approx(20.0)
    assert default_burn_in(1000.0) == pytest.approx(50.0)
    assert default_burn_in(10.0, 0.5) == pytest.approx(0.5)


def test_tiny_occupation(reaction):
    traj = gillespie(reaction, SimConfig(42, 1e4))
    assert total_variation(traj, reaction.pi) < 0.02
    assert traj.occupation.sum() == pytest.approx(1e4, rel=1e-9)


def test_occupation_with_burn_in(reaction):
    traj = gillespie(reaction, SimConfig(3, 500.0, burn_in=50.0))
    assert traj.occupation.sum() == pytest.approx(450.0, rel=1e-9)


def test_determinism(reaction):
    cfg = SimConfig(42, 2000.0)
    a, b = gillespie(reaction, cfg), gillespie(reaction, cfg)
    assert a.to_bytes() == b.to_bytes()
    c = gillespie(reaction, SimConfig(43, 2000.0))
    assert a.to_bytes() != c.to_bytes()


def test_streams_independent(reaction):
    trajs = simulate(reaction, SimConfig(5, 200.0, trajectory_count=3))
    assert len({t.to_bytes() for t in trajs}) == 3
    assert trajs[1].to_bytes() == gillespie(reaction, SimConfig(5, 200.0), index=1).to_bytes()
    x = rng_stream(5, 1).random(3)
    np.testing.assert_array_equal(x, rng_stream(5, 1).random(3))


def test_single_state_space():
    gen = chain_generator(RateMatrix([[0.0]]), ReversibleMeasure([1.0]))
    traj = gillespie(gen, SimConfig(1, 10.0))
    assert traj.n_jumps == 0 and traj.degenerate
    assert traj.occupation_measure() == pytest.approx([1.0])
    with pytest.raises(InvalidSpecError):
        horizon_for_jumps(gen, 100)


def test_flux_symmetry_passes(reaction):
    traj = gillespie(reaction, SimConfig(42, horizon_for_jumps(reaction, 1e5)))
    rep = empirical_flux_symmetry(traj, reaction)
    assert rep.verdict == "pass" and not rep.flagged()
    assert "Bonferroni" in rep.to_json()["note"]


def test_flux_symmetry_flags_broken_edge(reaction):
    i, j = reaction.labels.index("1,2"), reaction.labels.index("2")
    broken = reaction.with_rate(i, j, 3.0)
    traj = gillespie(broken, SimConfig(42, horizon_for_jumps(broken, 1e5)))
    flagged = empirical_flux_symmetry(traj, broken).flagged()
    assert {"1,2", "2"} in [set(e["edge"]) for e in flagged]


def test_flux_symmetry_inconclusive_and_no_data():
    q = np.zeros((3, 3))
    q[0, 1] = q[1, 0] = 1.0
    q[1, 2], q[2, 1] = 1e-9, 1.0
    w = np.array([1.0, 1.0, 1e-9])
    gen = chain_generator(RateMatrix(q), ReversibleMeasure(w / w.sum()))
    short = gillespie(gen, SimConfig(1, 10.0), start=0)
    assert empirical_flux_symmetry(short, gen).verdict == "inconclusive"
    long = gillespie(gen, SimConfig(1, 5000.0), start=0)
    rep = empirical_flux_symmetry(long, gen)
    statuses = {tuple(e["edge"]): e["status"] for e in rep.edges}
    assert statuses[("1", "2")] == "no data"
    assert rep.verdict == "pass"


def test_decay_rate_of_gap_certificate(reaction):
    g = spectral_gap(reaction)
    fit = decay_rate_estimate(reaction, SimConfig(42, horizon_for_jumps(reaction, 1e5)), g.certificate, gap=g.gap)
    assert 0.8 * g.gap <= fit.rate <= 1.2 * g.gap
    assert fit.r2 > 0.9


def test_decay_rate_of_level_indicator(reaction):
    g = spectral_gap(reaction)
    F = (reaction.sizes == 1).astype(float)
    fit = decay_rate_estimate(reaction, SimConfig(42, horizon_for_jumps(reaction, 1e5)), F, gap=g.gap)
    assert fit.rate >= g.gap - (fit.band[1] - fit.band[0])


def test_decay_rejects_constant(reaction):
    with pytest.raises(InvalidSpecError):
        decay_rate_estimate(reaction, SimConfig(1, 100.0), np.ones(reaction.n_states))


def test_trajectory_csv(reaction):
    traj = gillespie(reaction, SimConfig(2, 5.0))
    rows = list(traj.csv_rows(reaction.labels))
    assert rows[0] == ("time", "state")
    assert len(rows) == traj.n_jumps + 2
    assert rows[1][0] == "0.0"
