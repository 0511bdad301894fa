from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qbranch.errors import DomainError
from qbranch.fock import LatticeGeometry, enumerate_sector
from qbranch.opspace import (
    ControlField,
    basis_F,
    basis_G,
    embed,
    embed_full,
    embedded_basis,
    inner_product,
    is_f_operator,
    is_g_operator,
    lie_closure,
    operator_basis,
    random_control_field,
    spin_flip_field,
    trace_inner_product,
)

N_LOCAL = np.diag([0, 1, 1, 2]).astype(complex)
N_PAIR = np.kron(N_LOCAL, np.eye(4)) + np.kron(np.eye(4), N_LOCAL)


def _gram(ops):
    return np.array([[np.trace(a.matrix @ b.matrix).real for b in ops] for a in ops])


def test_basis_F():
    F = basis_F(0)
    assert len(F) == 5
    for h in F:
        m = h.matrix
        assert np.allclose(m, m.conj().T)
        assert abs(np.trace(m)) < 1e-12
        assert np.abs(m @ N_LOCAL - N_LOCAL @ m).max() < 1e-12
    # orthonormal for <f, f'> = 4 Tr(f f')
    assert np.allclose(4 * _gram(F), np.eye(5), atol=1e-12)


def test_basis_G():
    g = LatticeGeometry.chain(3)
    G = basis_G(0, 1, g)
    assert len(G) == 59
    assert np.allclose(_gram(G), np.eye(59), atol=1e-12)
    F = [h.matrix for h in basis_F(0)]
    for h in G:
        m = h.matrix
        assert np.abs(m @ N_PAIR - N_PAIR @ m).max() < 1e-12
        for f in F:
            assert abs(np.trace(m @ np.kron(f, np.eye(4)))) < 1e-12
            assert abs(np.trace(m @ np.kron(np.eye(4), f))) < 1e-12


def test_basis_G_rejects_non_neighbours():
    g = LatticeGeometry.chain(4)
    with pytest.raises(DomainError):
        basis_G(0, 2, g)


def test_dimension_count():
    # number-preserving Hermitian on 16 dims: blocks 1,4,6,4,1 -> 70; minus identity
    # and the two single-site F spaces (5 each) leaves 59
    assert sum(d * d for d in (1, 4, 6, 4, 1)) - 1 - 2 * 5 == 59


def test_class_checks():
    assert is_f_operator(basis_F(0)[0].matrix)
    assert not is_f_operator(np.eye(4))
    assert is_g_operator(basis_G(0, 1)[3].matrix)
    assert not is_g_operator(np.kron(basis_F(0)[0].matrix, np.eye(4)))


def test_control_field_validation():
    g = LatticeGeometry.chain(3)
    with pytest.raises(DomainError):
        ControlField(g, f_terms={0: np.eye(4)})
    with pytest.raises(DomainError):
        ControlField(g, g_terms={(0, 2): basis_G(0, 1)[0].matrix})


@pytest.mark.parametrize("L", [2, 3])
def test_norm_matches_trace_identity(L, rng):
    g = LatticeGeometry.chain(L)
    for _ in range(100 if L == 3 else 20):
        k = random_control_field(g, rng, density=0.7)
        kp = random_control_field(g, rng, density=0.7)
        assert abs(inner_product(k, kp) - trace_inner_product(k, kp)) < 1e-10
        assert abs(k.norm() ** 2 - trace_inner_product(k, k)) < 1e-10


def test_single_pair_norm_example():
    # a pair term with Tr h^2 = 2 has norm^2 2
    g = LatticeGeometry.chain(2)
    h = basis_G(0, 1)[0].matrix * np.sqrt(2)
    k = ControlField(g, g_terms={(0, 1): h})
    assert k.norm() ** 2 == pytest.approx(2.0)


@given(st.integers(0, 10_000))
def test_coefficients_round_trip(seed):
    g = LatticeGeometry.chain(3)
    rng = np.random.default_rng(seed)
    c = rng.normal(size=operator_basis(g).size)
    k = ControlField.from_coefficients(g, c)
    assert np.allclose(k.coefficients(), c)
    assert k.norm() == pytest.approx(np.linalg.norm(c))


@given(st.integers(0, 10_000), st.floats(-3, 3))
def test_field_arithmetic(seed, a):
    g = LatticeGeometry.chain(3)
    rng = np.random.default_rng(seed)
    k, kp = random_control_field(g, rng), random_control_field(g, rng)
    assert np.allclose((k + kp * a).coefficients(), k.coefficients() + a * kp.coefficients())
    assert np.allclose((k - k).coefficients(), 0)


def test_sector_embedding_matches_full_space(rng):
    g = LatticeGeometry.chain(3)
    k = random_control_field(g, rng)
    full = embed_full(k)
    # full-space index = base-4 code; pick out the n=2 sector rows
    sec = enumerate_sector(g, 2)
    idx = np.asarray(sec.codes)
    assert np.allclose(full[np.ix_(idx, idx)], embed(k, sec))
    # k preserves particle number: nothing leaks out of the sector
    mask = np.ones(4 ** 3, dtype=bool)
    mask[idx] = False
    assert np.abs(full[np.ix_(mask, idx)]).max() < 1e-12


def test_embedded_basis_shape():
    sec = enumerate_sector(LatticeGeometry.chain(3), 2)
    E = embedded_basis(sec)
    assert E.shape == (operator_basis(sec.geometry).size, sec.dim, sec.dim)


def test_spin_flip_field_preserves_norm(rng):
    g = LatticeGeometry.chain(3)
    k = random_control_field(g, rng)
    assert spin_flip_field(k).norm() == pytest.approx(k.norm())
    assert np.allclose(spin_flip_field(spin_flip_field(k)).coefficients(), k.coefficients())


def test_lie_closure_two_sites():
    rep = lie_closure(LatticeGeometry.chain(2))
    assert rep.closure_dimension == 65
    assert rep.expected_dimension == sum(comb(4, n) ** 2 - 1 for n in (1, 2, 3))
    assert rep.passed


def test_lie_closure_empty_sector():
    rep = lie_closure(LatticeGeometry.chain(2), n_sectors=[0])
    assert rep.closure_dimension == 0
    assert rep.expected_dimension == 0


@pytest.mark.slow
def test_lie_closure_three_sites():
    g = LatticeGeometry.chain(3)
    rep = lie_closure(g)
    expected = sum(comb(6, n) ** 2 - 1 for n in range(1, 6))
    assert rep.expected_dimension == expected == 917
    assert rep.closure_dimension == expected
