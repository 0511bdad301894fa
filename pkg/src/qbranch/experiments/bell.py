"""Four-particle Bell experiment: branch weights, replica ensembles and a lattice check.

Particles 0 and 1 share a spin singlet.  Particle 2 (spin 1) probes particle
0: their spin-1 components reflect off each other, the rest pass through.
Particle 3 (spin ``e = [cos(theta/2), sin(theta/2)]``) probes particle 1 the
same way in the rotated basis.  Branch ``(e0, e1)`` records whether each
probe reflected (``u``) or passed (``d``).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ..errors import DomainError
from ..fock import (
    LatticeGeometry,
    StateVector,
    apply_annihilation,
    apply_orbital_creation,
    enumerate_sector,
    product_orbital,
    vacuum,
)

LABELS = ("uu", "ud", "du", "dd")
BLOCK = 4096
WORKERS_ENV = "QBRANCH_WORKERS"

SINGLET = np.array([[0.0, 1.0], [-1.0, 0.0]]) / np.sqrt(2)  # [s0, s1], index 0 is spin 1


def _analyzer(angle: float) -> np.ndarray:
    return np.array([np.cos(angle / 2), np.sin(angle / 2)])


def _complement(v: np.ndarray) -> np.ndarray:
    return np.array([-v[1], v[0]])


def bell_weights(theta: float) -> np.ndarray:
    """``(sin^2/2, cos^2/2, cos^2/2, sin^2/2)`` of ``theta/2``, exact at 0 and pi."""
    c = np.cos(theta)
    return np.array([1 - c, 1 + c, 1 + c, 1 - c]) / 4


@dataclass
class BellBranches:
    theta: float
    labels: tuple
    weights: np.ndarray
    eta: np.ndarray
    spin_states: list
    momenta: list
    initial_positions: list
    gram: np.ndarray


def bell_single(theta: float, q: float = 1.0, w: float = 1.0) -> BellBranches:
    """The four branches of one experiment.

    Weights come from projecting the initial spin state on each branch's
    record states, so they are computed rather than copied from the closed form.
    """
    a0 = _analyzer(0.0)
    a1 = _analyzer(theta)
    psi = np.einsum("ab,c,d->abcd", SINGLET, a0, a1)
    rec0 = {"u": a0, "d": _complement(a0)}
    rec1 = {"u": a1, "d": _complement(a1)}
    weights, spins, momenta, positions = [], [], [], []
    for lab in LABELS:
        e0, e1 = lab
        proj = np.einsum("a,b,c,d->abcd", rec0[e0], rec1[e1], a0, a1)
        weights.append(abs(np.vdot(proj, psi)) ** 2)
        spins.append(proj)
        # unscattered momenta (q, -q, -q, q); reflected ones flip sign
        s0 = -1 if e0 == "u" else 1
        s1 = -1 if e1 == "u" else 1
        k = (s0 * q, -s1 * q, -s0 * q, s1 * q)
        momenta.append(k)
        # centres sit at the collision points 2w, -2w at t = m w / q
        tc_shift = np.array(k) * w / q
        hits = np.array([2 * w, -2 * w, 2 * w, -2 * w])
        positions.append(tuple(hits - tc_shift))
    weights = np.array(weights)
    eta = np.sqrt(weights)
    vecs = np.array([(e * s).ravel() for e, s in zip(eta, spins)])
    gram = vecs.conj() @ vecs.T
    if abs(weights.sum() - 1) > 1e-12:
        raise DomainError("branch weights do not sum to one")
    return BellBranches(float(theta), LABELS, weights, eta, spins, momenta, positions, gram)


# ---------------------------------------------------------------------------
# replica ensembles


@dataclass
class BellConfig:
    theta: float = np.pi / 2
    q: float = 1.0
    w: float = 10.0
    d: float = 1.0
    m: float = 1.0
    replicas: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.theta <= np.pi:
            raise DomainError("theta must lie in [0, pi]")
        if int(self.replicas) < 1:
            raise DomainError("need at least one replica")
        for name in ("q", "w", "d", "m"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        self.replicas = int(self.replicas)


@dataclass
class BellOutcome:
    theta: float
    replicas: int
    seed: int
    outcomes: np.ndarray = field(repr=False)  # (N, 2), 0 = u, 1 = d
    agree: int
    disagree: int
    correlation: float
    stderr: float

    @property
    def expected(self) -> float:
        return float(-np.cos(self.theta))

    def counts(self) -> dict:
        codes = 2 * self.outcomes[:, 0] + self.outcomes[:, 1]
        return {lab: int(np.sum(codes == i)) for i, lab in enumerate(LABELS)}


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _sample_block(args):
    seed, block, size, cum = args
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
    return np.searchsorted(cum, rng.random(size), side="right")


def bell_ensemble(cfg: BellConfig) -> BellOutcome:
    """Sample one branch of ``N`` independent replicas.

    Replicas are drawn in fixed-size blocks, each with its own derived seed,
    so results do not depend on the number of worker threads.
    """
    w = bell_single(cfg.theta).weights
    # exact zeros at theta = 0, pi
    w = np.where(bell_weights(cfg.theta) == 0, 0.0, w)
    cum = np.cumsum(w / w.sum())
    cum[-1] = 1.0
    N = cfg.replicas
    jobs = [(cfg.seed, i, min(BLOCK, N - i * BLOCK), cum) for i in range(-(-N // BLOCK))]
    nw = _workers()
    if nw > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(nw) as ex:
            parts = list(ex.map(_sample_block, jobs))
    else:
        parts = [_sample_block(j) for j in jobs]
    codes = np.concatenate(parts)
    outcomes = np.stack([codes // 2, codes % 2], axis=1).astype(np.int8)
    agree = int(np.sum(outcomes[:, 0] == outcomes[:, 1]))
    disagree = N - agree
    p = (1 - np.cos(cfg.theta)) / 2
    return BellOutcome(
        theta=float(cfg.theta),
        replicas=N,
        seed=cfg.seed,
        outcomes=outcomes,
        agree=agree,
        disagree=disagree,
        correlation=(agree - disagree) / N,
        stderr=float(2 * np.sqrt(p * (1 - p) / N)),
    )


def bell_exact(theta: float, replicas: int) -> dict:
    """Mean and variance of the correlation by enumerating all ``4**N`` branches."""
    if not 1 <= replicas <= 8:
        raise DomainError("exhaustive enumeration supports 1..8 replicas")
    w = bell_single(theta).weights
    agree = np.array([1, 0, 0, 1])
    mean = var_acc = 0.0
    for combo in product(range(4), repeat=replicas):
        weight = float(np.prod(w[list(combo)]))
        a = agree[list(combo)].sum()
        corr = (2 * a - replicas) / replicas
        mean += weight * corr
        var_acc += weight * corr ** 2
    return {"mean": mean, "variance": var_acc - mean ** 2, "branches": 4 ** replicas}


# ---------------------------------------------------------------------------
# lattice realization of the two collisions

# one site per (particle, direction): incoming and reflected slots
SLOTS = {(3, "in"): 0, (3, "out"): 1, (1, "out"): 2, (1, "in"): 3,
         (0, "in"): 4, (0, "out"): 5, (2, "out"): 6, (2, "in"): 7}


def _create(state: StateVector, site: int, spinor) -> StateVector:
    L = state.geometry.n_sites
    pos = np.zeros(L)
    pos[site] = 1.0
    return apply_orbital_creation(state, product_orbital(pos, spinor))


def _annihilate(state: StateVector, site: int, spinor) -> StateVector:
    a = apply_annihilation(state, site, 1) * np.conj(spinor[0])
    return a + apply_annihilation(state, site, -1) * np.conj(spinor[1])


def _hop(state, src, dst, spinor):
    return _create(_annihilate(state, src, spinor), dst, spinor)


def _reflect(state: StateVector, a: int, b: int, spinor) -> StateVector:
    """Swap both particles of a collision between incoming and outgoing slots
    when both carry ``spinor``; identity otherwise."""
    ia, oa = SLOTS[(a, "in")], SLOTS[(a, "out")]
    ib, ob = SLOTS[(b, "in")], SLOTS[(b, "out")]
    S = lambda v: _hop(_hop(v, ib, ob, spinor), ia, oa, spinor)
    Sd = lambda v: _hop(_hop(v, oa, ia, spinor), ob, ib, spinor)
    s, sd = S(state), Sd(state)
    return state - Sd(s) - S(sd) + s + sd


def _initial_state(geom: LatticeGeometry, a02, a13) -> StateVector:
    total = None
    for i, j in product(range(2), repeat=2):
        c = SINGLET[i, j]
        if c == 0:
            continue
        v = vacuum(geom)
        v = _create(v, SLOTS[(0, "in")], np.eye(2)[i])
        v = _create(v, SLOTS[(1, "in")], np.eye(2)[j])
        v = _create(v, SLOTS[(2, "in")], a02)
        v = _create(v, SLOTS[(3, "in")], a13)
        total = v * c if total is None else total + v * c
    return total


@dataclass
class BellCheck:
    theta: float
    phi: float
    weights: np.ndarray
    record_overlaps: np.ndarray
    expected: np.ndarray
    norm: float
    gram_offdiag: float
    max_error: float

    @property
    def passed(self) -> bool:
        return self.max_error < 1e-12


def bell_state_check(theta: float, phi: float = 0.0) -> BellCheck:
    """Apply both collisions to the four-particle lattice state and read off the branches.

    ``phi`` rotates both analyzers together.  ``record_overlaps[i]`` is
    ``|<record_i|branch_i>|^2`` for the product state in which particles 0, 1
    carry the spins their probes recorded; it equals the branch weight when
    the branch is exactly that record state.
    """
    geom = LatticeGeometry.chain(8)
    a02, a13 = _analyzer(phi), _analyzer(phi + theta)
    psi = _initial_state(geom, a02, a13)
    out = _reflect(_reflect(psi, 0, 2, a02), 1, 3, a13)
    counts = enumerate_sector(geom, 4).site_counts()
    branches, overlaps = [], []
    rec = {0: {"u": a02, "d": _complement(a02)}, 1: {"u": a13, "d": _complement(a13)}}
    for lab in LABELS:
        e0, e1 = lab
        s0 = SLOTS[(0, "out" if e0 == "u" else "in")]
        s1 = SLOTS[(1, "out" if e1 == "u" else "in")]
        mask = (counts[:, s0] > 0) & (counts[:, s1] > 0)
        br = out.with_amplitudes(np.where(mask, out.amplitudes, 0))
        branches.append(br)
        v = vacuum(geom)
        v = _create(v, s0, rec[0][e0])
        v = _create(v, s1, rec[1][e1])
        v = _create(v, SLOTS[(2, "out" if e0 == "u" else "in")], a02)
        v = _create(v, SLOTS[(3, "out" if e1 == "u" else "in")], a13)
        overlaps.append(abs(v.vdot(br)) ** 2)
    weights = np.array([br.norm() ** 2 for br in branches])
    gram = np.array([[a.vdot(b) for b in branches] for a in branches])
    expected = bell_weights(theta)
    err = max(np.max(np.abs(weights - expected)), np.max(np.abs(np.array(overlaps) - expected)),
              abs(out.norm() - 1))
    return BellCheck(
        theta=float(theta),
        phi=float(phi),
        weights=weights,
        record_overlaps=np.array(overlaps),
        expected=expected,
        norm=out.norm(),
        gram_offdiag=float(np.max(np.abs(gram - np.diag(np.diag(gram))))),
        max_error=float(err),
    )
