import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qbranch.errors import DomainError
from qbranch.experiments import (
    LABELS,
    BellConfig,
    GaussianPacket,
    SternGerlachConfig,
    bell_ensemble,
    bell_exact,
    bell_single,
    bell_state_check,
    bell_weights,
    component_separation,
    kicked_packets,
    quadrature_moments,
    separation_condition,
    stern_gerlach_run,
)

GRID = np.linspace(0, np.pi, 17)


def closed_form(theta):
    s, c = np.sin(theta / 2) ** 2, np.cos(theta / 2) ** 2
    return np.array([s, c, c, s]) / 2


# ---------------------------------------------------------------------------
# packets


@pytest.mark.parametrize("t", [0.0, 0.7, 3.0, 25.0])
@pytest.mark.parametrize("d,m", [(1.0, 1.0), (0.5, 2.0), (2.0, 0.3)])
def test_packet_moments_match_quadrature(t, d, m):
    p = GaussianPacket((0.8, -1.1), (2.0, -3.0), d, m)
    for axis in (0, 1):
        norm, mean, var = quadrature_moments(p, t, axis)
        assert norm == pytest.approx(1, abs=1e-8)
        assert mean == pytest.approx(p.mean(t)[axis], abs=1e-8)
        assert var == pytest.approx(p.variance(t), abs=1e-8 * max(1, p.variance(t)))


def test_packet_dispersion_minimal_at_birth():
    p = GaussianPacket((1.0,), (0.0,), 0.7, 1.3)
    ts = np.linspace(-5, 5, 101)
    assert np.argmin([p.dispersion(t) for t in ts]) == 50
    assert p.dispersion(0) == pytest.approx(0.7)


def test_kicked_packet_is_continuous_at_kick():
    p = GaussianPacket((1.0, 0.0), (10.0, 0.0), 1.0, 2.0)
    q = p.kicked((0.0, 0.5), 3.0)
    assert np.allclose(q.mean(3.0), p.mean(3.0))
    assert np.allclose(q.k, (1.0, 0.5))
    norm, mean, _ = quadrature_moments(q, 7.0, axis=1)
    assert mean == pytest.approx(0.5 * (7.0 - 3.0) / 2.0, abs=1e-8)


def test_packet_validation():
    with pytest.raises(DomainError):
        GaussianPacket((1.0,), (0.0,), 0.0, 1.0)
    with pytest.raises(DomainError):
        GaussianPacket((1.0, 2.0), (0.0,), 1.0, 1.0)


# ---------------------------------------------------------------------------
# Stern-Gerlach


def test_separation_condition_examples():
    d = 0.8
    assert separation_condition(1 / d, d)
    assert not separation_condition(1 / (2 * np.sqrt(2) * d), d)
    with pytest.raises(DomainError):
        separation_condition(0.0, 1.0)


@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_separation_condition_scaling(r, d):
    assert separation_condition(r, d) == separation_condition(r / 2, 2 * d)


def test_stern_gerlach_two_half_branches():
    rep = stern_gerlach_run(SternGerlachConfig())
    assert rep.status == "branched"
    assert len(rep.final_branches) == 2
    assert rep.weights.tolist() == [0.5, 0.5]
    assert [b.weight for b in rep.pulled_back] == [0.5, 0.5]
    assert {b.spins for b in rep.final_branches} == {(1, -1), (-1, 1)}


@pytest.mark.parametrize("t", [2.0, 5.0, 40.0])
def test_stern_gerlach_separation_rate(t):
    cfg = SternGerlachConfig(r=0.7, m=1.5, t1=1.5, d=1.2)
    sep, disp = component_separation(cfg, t)
    assert sep == pytest.approx(2 * cfg.r * (t - cfg.t1) / cfg.m, rel=1e-12)
    up, down = kicked_packets(cfg)
    mu_up = quadrature_moments(up, t, axis=1)[1]
    mu_dn = quadrature_moments(down, t, axis=1)[1]
    assert mu_up - mu_dn == pytest.approx(sep, abs=1e-8)
    v = quadrature_moments(up, t, axis=1)[2] + quadrature_moments(down, t, axis=1)[2]
    assert np.sqrt(v) == pytest.approx(disp, abs=1e-8)


def test_separation_dispersion_asymptote():
    cfg = SternGerlachConfig(d=0.9, m=1.7)
    t = 1e5
    _, disp = component_separation(cfg, t)
    assert disp / (t / (cfg.d * cfg.m * np.sqrt(2))) == pytest.approx(1, abs=1e-8)


def test_stern_gerlach_below_threshold_never_branches():
    d = 1.0
    cfg = SternGerlachConfig(d=d, r=1 / (2 * np.sqrt(2) * d), b=1e-6, schedule=(2, 10, 100, 1e4))
    rep = stern_gerlach_run(cfg)
    assert rep.status == "no-branching"
    assert not rep.branched.any()
    assert np.all(rep.surrogate == 0)
    assert len(rep.final_branches) == 1


def test_stern_gerlach_branch_time_moves_with_b():
    small = stern_gerlach_run(SternGerlachConfig(b=0.1))
    large = stern_gerlach_run(SternGerlachConfig(b=50.0))
    assert small.branch_time <= large.branch_time
    huge = stern_gerlach_run(SternGerlachConfig(b=1e6))
    assert huge.status == "not-yet-branched"


def test_stern_gerlach_surrogate_monotone():
    rep = stern_gerlach_run(SternGerlachConfig(schedule=tuple(np.linspace(1.5, 60, 30))))
    assert np.all(np.diff(rep.surrogate) >= 0)
    # once branched, stays branched
    first = np.argmax(rep.branched)
    assert rep.branched[first:].all()


def test_stern_gerlach_config_validation():
    with pytest.raises(DomainError):
        SternGerlachConfig(r=-1)
    with pytest.raises(DomainError):
        SternGerlachConfig(t1=5.0, schedule=(2.0, 10.0))
    with pytest.raises(DomainError):
        SternGerlachConfig(schedule=(10.0, 5.0))


# ---------------------------------------------------------------------------
# Bell: single experiment


@pytest.mark.parametrize("theta,expected", [
    (0.0, [0, 0.5, 0.5, 0]),
    (np.pi / 2, [0.25] * 4),
    (np.pi / 3, [1 / 8, 3 / 8, 3 / 8, 1 / 8]),
])
def test_bell_single_examples(theta, expected):
    br = bell_single(theta)
    assert br.labels == LABELS
    assert np.allclose(br.weights, expected, atol=1e-15)


@pytest.mark.parametrize("theta", GRID)
def test_bell_single_weights_and_orthogonality(theta):
    br = bell_single(theta)
    assert np.allclose(br.weights, closed_form(theta), atol=1e-12)
    assert np.allclose(bell_weights(theta), closed_form(theta), atol=1e-15)
    assert br.weights.sum() == pytest.approx(1, abs=1e-14)
    off = br.gram - np.diag(np.diag(br.gram))
    assert np.max(np.abs(off)) < 1e-14
    assert np.all(br.eta >= 0)


def test_bell_momenta_flip_on_reflection():
    br = bell_single(0.4, q=2.0)
    k = dict(zip(br.labels, br.momenta))
    assert k["dd"] == (2.0, -2.0, -2.0, 2.0)
    assert k["uu"] == (-2.0, 2.0, 2.0, -2.0)
    # every particle of a branch sits at its collision point at t = m w / q
    for mom, x0 in zip(br.momenta, br.initial_positions):
        hits = np.array(x0) + np.array(mom) * 1.0 / 2.0
        assert np.allclose(np.abs(hits), 2.0)


# ---------------------------------------------------------------------------
# Bell: lattice realization


@pytest.mark.parametrize("theta", GRID)
def test_bell_state_check_grid(theta):
    chk = bell_state_check(theta)
    assert chk.passed
    assert np.allclose(chk.weights, closed_form(theta), atol=1e-12)
    assert np.allclose(chk.record_overlaps, closed_form(theta), atol=1e-12)
    assert chk.norm == pytest.approx(1, abs=1e-12)
    assert chk.gram_offdiag < 1e-12


def test_bell_state_check_theta_zero_kills_agreeing_branches():
    chk = bell_state_check(0.0)
    assert chk.weights[0] < 1e-28 and chk.weights[3] < 1e-28


@pytest.mark.parametrize("phi", [0.3, 1.2, 2.9])
def test_bell_state_check_rotation_invariance(phi):
    theta = 1.1
    a, b = bell_state_check(theta), bell_state_check(theta, phi=phi)
    assert np.allclose(a.weights, b.weights, atol=1e-12)


# ---------------------------------------------------------------------------
# Bell: replica ensembles


@pytest.mark.parametrize("theta", GRID)
def test_bell_ensemble_within_five_sigma(theta):
    res = bell_ensemble(BellConfig(theta=theta, replicas=10_000, seed=11))
    assert abs(res.correlation - res.expected) <= 5 * res.stderr + 1e-15
    assert res.agree + res.disagree == 10_000


@pytest.mark.parametrize("n", [1, 7, 5000])
def test_bell_ensemble_exact_extremes(n):
    assert bell_ensemble(BellConfig(theta=0.0, replicas=n)).correlation == -1.0
    assert bell_ensemble(BellConfig(theta=np.pi, replicas=n)).correlation == 1.0


def test_bell_ensemble_seed_reproducible():
    a = bell_ensemble(BellConfig(theta=1.0, replicas=9000, seed=3))
    b = bell_ensemble(BellConfig(theta=1.0, replicas=9000, seed=3))
    c = bell_ensemble(BellConfig(theta=1.0, replicas=9000, seed=4))
    assert np.array_equal(a.outcomes, b.outcomes)
    assert not np.array_equal(a.outcomes, c.outcomes)


def test_bell_ensemble_independent_of_workers(monkeypatch):
    cfg = BellConfig(theta=0.9, replicas=20_000, seed=5)
    monkeypatch.setenv("QBRANCH_WORKERS", "1")
    one = bell_ensemble(cfg)
    monkeypatch.setenv("QBRANCH_WORKERS", "4")
    four = bell_ensemble(cfg)
    assert np.array_equal(one.outcomes, four.outcomes)


def test_bell_ensemble_counts_follow_weights():
    res = bell_ensemble(BellConfig(theta=np.pi / 3, replicas=40_000, seed=2))
    counts = res.counts()
    assert sum(counts.values()) == 40_000
    p = bell_weights(np.pi / 3)
    for lab, w in zip(LABELS, p):
        assert abs(counts[lab] / 40_000 - w) < 5 * np.sqrt(w * (1 - w) / 40_000)


@pytest.mark.parametrize("theta", [0.0, 0.5, np.pi / 2, 2.2, np.pi])
@pytest.mark.parametrize("n", [1, 3, 6])
def test_bell_exhaustive_oracle(theta, n):
    ex = bell_exact(theta, n)
    c = np.cos(theta)
    assert ex["branches"] == 4 ** n
    assert ex["mean"] == pytest.approx(-c, abs=1e-12)
    assert ex["variance"] == pytest.approx((1 - c * c) / n, abs=1e-12)


def test_bell_config_validation():
    with pytest.raises(DomainError):
        BellConfig(theta=-0.1)
    with pytest.raises(DomainError):
        BellConfig(theta=3.2)
    with pytest.raises(DomainError):
        BellConfig(replicas=0)
    with pytest.raises(DomainError):
        bell_exact(1.0, 9)
