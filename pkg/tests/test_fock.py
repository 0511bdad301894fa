from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qbranch.errors import DegenerateInputError, DomainError
from qbranch.fock import (
    FockBasisState,
    LatticeGeometry,
    StateVector,
    apply_annihilation,
    apply_creation,
    basis_state,
    build_product_state,
    enumerate_sector,
    ladder_matrix,
    mode_index,
    number_expectation,
    sector_dimension,
    spin_flip,
    vacuum,
)


def test_sector_sizes():
    assert enumerate_sector(LatticeGeometry.chain(2), 1).dim == 4
    assert enumerate_sector(LatticeGeometry.chain(2), 2).dim == 6
    assert enumerate_sector(LatticeGeometry.chain(5), 2).dim == 45


@pytest.mark.parametrize("L", [2, 3, 4])
def test_sector_dimension_is_binomial(L):
    g = LatticeGeometry.chain(L)
    dims = [sector_dimension(g, n) for n in range(2 * L + 1)]
    assert dims == [comb(2 * L, n) for n in range(2 * L + 1)]
    assert sum(dims) == 4 ** L


def test_single_site_sector():
    # one site is below the lattice minimum, so read it off a 2-site lattice
    g = LatticeGeometry.chain(2)
    states = enumerate_sector(g, 1).states
    on_site0 = [s for s in states if s.occupation[1] == 0]
    assert sorted(s.occupation[0] for s in on_site0) == [-1, 1]


def test_sector_out_of_range():
    g = LatticeGeometry.chain(2)
    with pytest.raises(DomainError):
        enumerate_sector(g, 5)
    with pytest.raises(DomainError):
        enumerate_sector(g, -1)


def test_sector_index_is_bijection():
    sec = enumerate_sector(LatticeGeometry.chain(3), 3)
    for i, s in enumerate(sec.states):
        assert sec.index(s) == i
        assert s.n == 3
    assert len(set(sec.states)) == sec.dim


def test_creation_on_vacuum():
    g = LatticeGeometry.chain(3)
    out = apply_creation(vacuum(g), 0, 1)
    assert np.allclose(out.amplitudes, basis_state(g, {0: 1}).amplitudes)


def test_creation_sign_convention():
    g = LatticeGeometry.chain(2)
    target = basis_state(g, {0: 1, 1: 1})
    ordered = apply_creation(apply_creation(vacuum(g), 0, 1), 1, 1)
    reversed_ = apply_creation(apply_creation(vacuum(g), 1, 1), 0, 1)
    assert ordered.vdot(target) == pytest.approx(1.0)
    assert reversed_.vdot(target) == pytest.approx(-1.0)


def test_double_occupancy_is_spin_down_then_up():
    g = LatticeGeometry.chain(2)
    dbl = apply_creation(apply_creation(vacuum(g), 0, 1), 0, -1)
    assert dbl.vdot(basis_state(g, {0: 2})) == pytest.approx(1.0)


def test_pauli_exclusion():
    g = LatticeGeometry.chain(2)
    twice = apply_creation(apply_creation(vacuum(g), 0, 1), 0, 1)
    assert twice.norm() == 0


def test_annihilation_of_empty_mode():
    g = LatticeGeometry.chain(2)
    assert apply_annihilation(basis_state(g, {1: -1}), 0, 1).norm() == 0


@pytest.mark.parametrize("L", [2, 3])
def test_anticommutators(L):
    g = LatticeGeometry.chain(L)
    modes = [(x, s) for x in range(L) for s in (1, -1)]
    a = {m: ladder_matrix(g, *m, create=False) for m in modes}
    ad = {m: ladder_matrix(g, *m, create=True) for m in modes}
    eye = np.eye(4 ** L)
    for m in modes:
        assert np.allclose(ad[m], a[m].conj().T)
        for n in modes:
            assert np.abs(a[m] @ a[n] + a[n] @ a[m]).max() == 0
            assert np.abs(ad[m] @ ad[n] + ad[n] @ ad[m]).max() == 0
            want = eye if m == n else 0
            assert np.abs(a[m] @ ad[n] + ad[n] @ a[m] - want).max() < 1e-14


def test_product_state_single_packet():
    g = LatticeGeometry.chain(3)
    psi = build_product_state(g, [([1, 0, 0], [1, 0])])
    assert psi.product
    assert abs(psi.vdot(basis_state(g, {0: 1}))) == pytest.approx(1.0)


def test_product_state_two_localized_packets():
    g = LatticeGeometry.chain(4)
    n = 3
    d0, dn = np.eye(4)[0], np.eye(4)[n]
    psi = build_product_state(g, [(d0, [1, 0]), (dn, [1, 0])])
    assert psi.vdot(basis_state(g, {0: 1, n: 1})) == pytest.approx(1.0)


def test_product_state_uniform_packet():
    g = LatticeGeometry.chain(4)
    r = 3
    p = np.array([1, 1, 1, 0]) / np.sqrt(r)
    psi = build_product_state(g, [(p, [0, 1])])
    for x in range(r):
        assert psi.vdot(basis_state(g, {x: -1})) == pytest.approx(1 / np.sqrt(r))


def test_product_state_collision():
    g = LatticeGeometry.chain(2)
    with pytest.raises(DegenerateInputError):
        build_product_state(g, [([1, 0], [1, 0]), ([1, 0], [1, 0])])


def test_basis_state_not_certified():
    assert not basis_state(LatticeGeometry.chain(2), {0: 1}).product


@given(st.integers(2, 4), st.integers(0, 4), st.integers(0, 10_000))
def test_number_expectation_sums_to_n(L, n, seed):
    n = min(n, 2 * L)
    sec = enumerate_sector(LatticeGeometry.chain(L), n)
    rng = np.random.default_rng(seed)
    v = rng.normal(size=sec.dim) + 1j * rng.normal(size=sec.dim)
    psi = StateVector(sec, v / np.linalg.norm(v))
    total = sum(number_expectation(psi, x) for x in range(L))
    assert total == pytest.approx(n)


@given(st.integers(0, 10_000))
def test_spin_flip_is_involutive_isometry(seed):
    sec = enumerate_sector(LatticeGeometry.chain(3), 3)
    rng = np.random.default_rng(seed)
    psi = StateVector(sec, rng.normal(size=sec.dim) + 1j * rng.normal(size=sec.dim))
    f = spin_flip(psi)
    assert f.norm() == pytest.approx(psi.norm())
    assert np.allclose(spin_flip(f).amplitudes, psi.amplitudes)


def test_mode_order():
    assert mode_index(0, 1) == 0
    assert mode_index(0, -1) == 1
    assert mode_index(2, 1) == 4
    with pytest.raises(DomainError):
        mode_index(0, 0)


def test_grid_order_is_row_major():
    g = LatticeGeometry.grid(3, 2)
    assert g.site_index((0, 1)) == 3
    assert g.coordinate(4) == (1, 1)
    assert (0, 3) in g.neighbor_pairs() and (2, 3) not in g.neighbor_pairs()


def test_fock_state_equality():
    assert FockBasisState((1, 0)) == FockBasisState((1, 0))
    assert FockBasisState((1, 0)) != FockBasisState((0, 1))
    assert FockBasisState((2, -1)).n == 3
