"""Finite lattice-fermion Fock space restricted to particle-number sectors.

Every site carries a four-dimensional space with basis ``|0>, |1>, |-1>, |2>``
(empty, spin up, spin down, doubly occupied).  Internally a site state is a
*local index* ``0, 1, 2, 3`` in that order, so the site number operator is
``diag(0, 1, 1, 2)``.

Fermionic modes are labelled ``m = 2 * site + (0 if spin == +1 else 1)``.  A
basis state with occupied modes ``m_1 < m_2 < ... < m_k`` is the vector::

    a+(m_k) ... a+(m_2) a+(m_1) |vac>

i.e. creation operators are applied in increasing mode order.  Written out,
the leftmost operator belongs to the largest site and a doubly occupied site
appears as ``a+(x, -1) a+(x, +1)``, which is exactly ``b+(x, 2)``.  With this
choice a product of ``b+`` operators applied to the vacuum in increasing site
order equals the tensor-product basis state with coefficient ``+1``.  All
local operators act on that tensor-product labelling without extra signs;
fermionic signs appear only in :func:`apply_creation` and
:func:`apply_annihilation`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np

from .errors import DegenerateInputError, DomainError

#: occupation label of each local index
LOCAL_LABELS = (0, 1, -1, 2)
#: particle count of each local index
LOCAL_COUNT = np.array([0, 1, 1, 2])
_LABEL_TO_LOCAL = {0: 0, 1: 1, -1: 2, 2: 3}

NORM_TOL = 1e-9


def mode_index(site: int, spin: int) -> int:
    """Return the fermionic mode label of ``(site, spin)``."""
    if spin not in (1, -1):
        raise DomainError(f"spin must be +1 or -1, got {spin!r}")
    return 2 * site + (0 if spin == 1 else 1)


@dataclass(frozen=True)
class LatticeGeometry:
    """Rectangular lattice of sites.

    ``shape`` is ``(L,)`` for a chain or ``(Lx, Ly)`` for a 2-D grid.  Sites
    are numbered in a fixed total order: increasing position along a chain,
    and for grids row by row, ``index = z_y * Lx + z_x``, so that a row of
    constant ``z_y`` is a contiguous block.  ``spacing`` is the lattice
    constant used by the continuum models.
    """

    shape: tuple
    spacing: float = 1.0

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) not in (1, 2):
            raise DomainError("only 1-D and 2-D lattices are supported")
        if any(s < 1 for s in shape) or int(np.prod(shape)) < 2:
            raise DomainError(f"lattice needs at least 2 sites, got shape {shape}")
        if self.spacing <= 0:
            raise DomainError("lattice spacing must be positive")
        object.__setattr__(self, "shape", shape)

    @classmethod
    def chain(cls, n_sites: int, spacing: float = 1.0) -> "LatticeGeometry":
        return cls((n_sites,), spacing)

    @classmethod
    def centered(cls, x_max: int, spacing: float = 1.0) -> "LatticeGeometry":
        """Chain of the sites ``|x| <= x_max``."""
        return cls((2 * x_max + 1,), spacing)

    @classmethod
    def grid(cls, nx: int, ny: int, spacing: float = 1.0) -> "LatticeGeometry":
        return cls((nx, ny), spacing)

    @property
    def dims(self) -> int:
        return len(self.shape)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_modes(self) -> int:
        return 2 * self.n_sites

    def site_index(self, coord) -> int:
        if self.dims == 1:
            x = int(coord[0] if np.ndim(coord) else coord)
            if not 0 <= x < self.shape[0]:
                raise DomainError(f"site {x} outside chain of {self.shape[0]} sites")
            return x
        zx, zy = (int(c) for c in coord)
        if not (0 <= zx < self.shape[0] and 0 <= zy < self.shape[1]):
            raise DomainError(f"site {(zx, zy)} outside grid {self.shape}")
        return zy * self.shape[0] + zx

    def coordinate(self, site: int) -> tuple:
        self._check_site(site)
        if self.dims == 1:
            return (site,)
        return (site % self.shape[0], site // self.shape[0])

    def neighbor_pairs(self) -> list:
        """Nearest-neighbour pairs ``(x, y)`` with ``x < y`` in site order."""
        pairs = []
        for site in range(self.n_sites):
            coord = self.coordinate(site)
            for axis in range(self.dims):
                nxt = list(coord)
                nxt[axis] += 1
                if nxt[axis] < self.shape[axis]:
                    pairs.append((site, self.site_index(nxt)))
        return sorted(pairs)

    def are_neighbors(self, x: int, y: int) -> bool:
        return tuple(sorted((x, y))) in set(self.neighbor_pairs())

    def _check_site(self, site: int):
        if not 0 <= site < self.n_sites:
            raise DomainError(f"site {site} outside lattice of {self.n_sites} sites")


@dataclass(frozen=True)
class FockBasisState:
    """One occupation pattern; ``occupation[x]`` is 0, 1, -1 or 2."""

    occupation: tuple

    @property
    def n(self) -> int:
        return int(sum(abs(v) for v in self.occupation))

    def __str__(self):
        sym = {0: "0", 1: "u", -1: "d", 2: "2"}
        return "|" + "".join(sym[v] for v in self.occupation) + ">"


class SectorBasis:
    """Basis of the eigenspace of total particle number ``n``.

    States are ordered lexicographically in their sorted mode tuples.
    ``configs[i]`` holds the local index of every site for state ``i`` and
    ``modes[i]`` the occupation of every fermionic mode.
    """

    def __init__(self, geometry: LatticeGeometry, n: int):
        n_modes = geometry.n_modes
        if not 0 <= n <= n_modes:
            raise DomainError(f"particle number {n} outside [0, {n_modes}]")
        self.geometry = geometry
        self.n = n
        combos = list(itertools.combinations(range(n_modes), n))
        d = len(combos)
        modes = np.zeros((d, n_modes), dtype=bool)
        for i, c in enumerate(combos):
            modes[i, list(c)] = True
        self.modes = modes
        up = modes[:, 0::2].astype(np.int8)
        dn = modes[:, 1::2].astype(np.int8)
        # local index: up only -> 1, down only -> 2, both -> 3
        self.configs = (up + 2 * dn).astype(np.int8)
        self.configs.setflags(write=False)
        self.modes.setflags(write=False)
        self.codes = _encode(self.configs)
        self._order = np.argsort(self.codes, kind="stable")
        self._sorted_codes = self.codes[self._order]

    @property
    def dim(self) -> int:
        return len(self.codes)

    def __len__(self):
        return self.dim

    def __repr__(self):
        return f"SectorBasis(shape={self.geometry.shape}, n={self.n}, dim={self.dim})"

    @property
    def states(self) -> list:
        return [FockBasisState(tuple(LOCAL_LABELS[v] for v in row)) for row in self.configs]

    def lookup(self, codes) -> np.ndarray:
        """Map encoded configurations to basis indices (-1 when absent)."""
        codes = np.asarray(codes, dtype=np.int64)
        pos = np.searchsorted(self._sorted_codes, codes)
        pos = np.clip(pos, 0, self.dim - 1)
        found = self._sorted_codes[pos] == codes
        return np.where(found, self._order[pos], -1)

    def index(self, state) -> int:
        """Index of a :class:`FockBasisState` (or occupation tuple)."""
        occ = state.occupation if isinstance(state, FockBasisState) else tuple(state)
        if len(occ) != self.geometry.n_sites:
            raise DomainError("occupation length does not match the lattice")
        local = np.array([[_LABEL_TO_LOCAL[v] for v in occ]], dtype=np.int8)
        idx = int(self.lookup(_encode(local))[0])
        if idx < 0:
            raise DomainError(f"occupation {occ} is not in sector n={self.n}")
        return idx

    def site_counts(self) -> np.ndarray:
        """Particle count of every site for every basis state, shape (d, L)."""
        return LOCAL_COUNT[self.configs]


def _encode(configs: np.ndarray) -> np.ndarray:
    configs = np.asarray(configs, dtype=np.int64)
    weights = 4 ** np.arange(configs.shape[1] - 1, -1, -1, dtype=np.int64)
    return configs @ weights


@lru_cache(maxsize=64)
def enumerate_sector(geometry: LatticeGeometry, n: int) -> SectorBasis:
    """All occupation patterns with ``n`` particles, deterministically ordered."""
    return SectorBasis(geometry, n)


def sector_dimension(geometry: LatticeGeometry, n: int) -> int:
    return comb(geometry.n_modes, n)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Complex amplitudes over a sector basis.

    ``product`` certifies that the vector was produced by
    :func:`build_product_state`; such states are assigned zero complexity.
    """

    sector: SectorBasis
    amplitudes: np.ndarray
    product: bool = field(default=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.sector.dim,):
            raise DomainError(
                f"amplitude vector of shape {amps.shape} does not match sector dim {self.sector.dim}"
            )
        object.__setattr__(self, "amplitudes", amps)

    @property
    def geometry(self) -> LatticeGeometry:
        return self.sector.geometry

    @property
    def n(self) -> int:
        return self.sector.n

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        nrm = self.norm()
        if nrm < 1e-300:
            raise DegenerateInputError("cannot normalize the zero vector")
        return StateVector(self.sector, self.amplitudes / nrm, self.product)

    def vdot(self, other: "StateVector") -> complex:
        _check_same_sector(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def with_amplitudes(self, amplitudes) -> "StateVector":
        return StateVector(self.sector, amplitudes)

    def __add__(self, other):
        _check_same_sector(self, other)
        return StateVector(self.sector, self.amplitudes + other.amplitudes)

    def __sub__(self, other):
        _check_same_sector(self, other)
        return StateVector(self.sector, self.amplitudes - other.amplitudes)

    def __mul__(self, scalar):
        return StateVector(self.sector, self.amplitudes * scalar, self.product)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1


def _check_same_sector(a: StateVector, b: StateVector):
    if a.sector.geometry != b.sector.geometry or a.sector.n != b.sector.n:
        raise DomainError("state vectors live in different sectors")


def vacuum(geometry: LatticeGeometry) -> StateVector:
    return StateVector(enumerate_sector(geometry, 0), np.ones(1), product=True)


def basis_state(geometry: LatticeGeometry, occupation) -> StateVector:
    """Tensor-product basis state from a full occupation tuple or a ``{site: label}`` map."""
    if isinstance(occupation, dict):
        occ = [0] * geometry.n_sites
        for site, label in occupation.items():
            geometry._check_site(site)
            if label not in _LABEL_TO_LOCAL:
                raise DomainError(f"invalid occupation label {label!r}")
            occ[site] = label
        occupation = tuple(occ)
    state = FockBasisState(tuple(occupation))
    sector = enumerate_sector(geometry, state.n)
    amps = np.zeros(sector.dim, dtype=complex)
    amps[sector.index(state)] = 1.0
    return StateVector(sector, amps)


def _ladder(state: StateVector, site: int, spin: int, create: bool) -> StateVector:
    geom = state.geometry
    geom._check_site(site)
    m = mode_index(site, spin)
    src = state.sector
    n_new = src.n + (1 if create else -1)
    if not 0 <= n_new <= geom.n_modes:
        raise DomainError(f"target sector n={n_new} does not exist")
    dst = enumerate_sector(geom, n_new)
    out = np.zeros(dst.dim, dtype=complex)
    occupied = src.modes[:, m]
    rows = np.nonzero(~occupied if create else occupied)[0]
    if rows.size:
        above = src.modes[rows, m + 1:].sum(axis=1)
        sign = np.where(above % 2 == 0, 1.0, -1.0)
        configs = np.array(src.configs[rows], dtype=np.int64)
        bit = 1 if spin == 1 else 2
        configs[:, site] += bit if create else -bit
        idx = dst.lookup(_encode(configs))
        np.add.at(out, idx, sign * state.amplitudes[rows])
    return StateVector(dst, out)


def apply_creation(state: StateVector, site: int, spin: int) -> StateVector:
    """Apply ``a+(site, spin)``; an occupied mode yields the zero vector."""
    return _ladder(state, site, spin, create=True)


def apply_annihilation(state: StateVector, site: int, spin: int) -> StateVector:
    """Apply ``a(site, spin)``; an empty mode yields the zero vector."""
    return _ladder(state, site, spin, create=False)


def apply_orbital_creation(state: StateVector, orbital: np.ndarray) -> StateVector:
    """Apply ``sum_m orbital[m] a+(m)`` for a mode-amplitude vector of length 2L."""
    geom = state.geometry
    orbital = np.asarray(orbital, dtype=complex)
    if orbital.shape != (geom.n_modes,):
        raise DomainError("orbital must have one amplitude per mode")
    dst = enumerate_sector(geom, state.n + 1)
    out = np.zeros(dst.dim, dtype=complex)
    for m in np.nonzero(np.abs(orbital) > 0)[0]:
        site, spin = divmod(int(m), 2)
        out += orbital[m] * apply_creation(state, site, 1 if spin == 0 else -1).amplitudes
    return StateVector(dst, out)


def product_orbital(position, spin) -> np.ndarray:
    """Mode amplitudes ``p(x) s(i)`` of an extended one-particle state.

    ``spin`` is ``[s(+1), s(-1)]``.
    """
    p = np.asarray(position, dtype=complex)
    s = np.asarray(spin, dtype=complex)
    if s.shape != (2,):
        raise DomainError("spin wave function must have two components [s(+1), s(-1)]")
    return np.outer(p, s).ravel()


def build_product_state(geometry: LatticeGeometry, packets) -> StateVector:
    """``c+(p_{n-1}, s_{n-1}) ... c+(p_0, s_0) |vac>``, normalized.

    ``packets`` is a sequence of ``(p, s)`` pairs, ``p`` a position wave
    function over sites and ``s = [s(+1), s(-1)]``; ``packets[0]`` is applied
    first.  The returned vector carries the product-state certificate.
    """
    packets = list(packets)
    if len(packets) > geometry.n_modes:
        raise DomainError("more particles than fermionic modes")
    state = vacuum(geometry)
    for p, s in packets:
        p = np.asarray(p, dtype=complex)
        s = np.asarray(s, dtype=complex)
        if p.shape != (geometry.n_sites,):
            raise DomainError("position wave function must have one entry per site")
        if abs(np.linalg.norm(p) - 1) > NORM_TOL or abs(np.linalg.norm(s) - 1) > NORM_TOL:
            raise DomainError("position and spin wave functions must be normalized")
        state = apply_orbital_creation(state, product_orbital(p, s))
    nrm = state.norm()
    if nrm < 1e-12:
        raise DegenerateInputError("product state vanishes (identical modes collide)")
    return StateVector(state.sector, state.amplitudes / nrm, product=True)


def number_expectation(state: StateVector, site: int) -> float:
    probs = np.abs(state.amplitudes) ** 2
    return float(probs @ state.sector.site_counts()[:, site])


def hopping_matrix(sector: SectorBasis, m_from: int, m_to: int) -> np.ndarray:
    """Dense matrix of ``a+(m_to) a(m_from)`` restricted to ``sector``."""
    d = sector.dim
    mat = np.zeros((d, d), dtype=complex)
    if m_from == m_to:
        mat[np.diag_indices(d)] = sector.modes[:, m_from]
        return mat
    modes = np.array(sector.modes)
    rows = np.nonzero(modes[:, m_from] & ~modes[:, m_to])[0]
    if rows.size == 0:
        return mat
    sub = modes[rows].copy()
    s1 = sub[:, m_from + 1:].sum(axis=1)
    sub[:, m_from] = False
    s2 = sub[:, m_to + 1:].sum(axis=1)
    sub[:, m_to] = True
    sign = np.where((s1 + s2) % 2 == 0, 1.0, -1.0)
    configs = (sub[:, 0::2].astype(np.int64) + 2 * sub[:, 1::2].astype(np.int64))
    cols_new = sector.lookup(_encode(configs))
    mat[cols_new, rows] = sign
    return mat


def hopping_hamiltonian(sector: SectorBasis, hopping: float = 1.0, potential=None) -> np.ndarray:
    """Free nearest-neighbour hopping ``-J sum (a+_y a_x + h.c.)`` plus on-site potential."""
    geom = sector.geometry
    H = np.zeros((sector.dim, sector.dim), dtype=complex)
    for x, y in geom.neighbor_pairs():
        for spin in (1, -1):
            hop = hopping_matrix(sector, mode_index(x, spin), mode_index(y, spin))
            H -= hopping * (hop + hop.conj().T)
    if potential is not None:
        potential = np.asarray(potential, dtype=float)
        H += np.diag(sector.site_counts() @ potential)
    return H


def spin_flip(state: StateVector) -> StateVector:
    """Relabel every spin up <-> down (a product of single-site unitaries).

    A doubly occupied site picks up a factor -1, matching the fermionic
    exchange ``a+(x, +1) a+(x, -1) = -b+(x, 2)``.
    """
    sector = state.sector
    perm = np.array([0, 2, 1, 3], dtype=np.int64)
    configs = perm[sector.configs.astype(np.int64)]
    idx = sector.lookup(_encode(configs))
    doubles = (sector.configs == 3).sum(axis=1)
    sign = np.where(doubles % 2 == 0, 1.0, -1.0)
    out = np.zeros(sector.dim, dtype=complex)
    out[idx] = sign * state.amplitudes
    return StateVector(sector, out, state.product)


def full_space_blocks(geometry: LatticeGeometry) -> list:
    """Sector bases for every particle number, in increasing ``n``."""
    return [enumerate_sector(geometry, n) for n in range(geometry.n_modes + 1)]


def ladder_matrix(geometry: LatticeGeometry, site: int, spin: int, create: bool = True) -> np.ndarray:
    """Full Fock-space matrix of ``a+`` (or ``a``) in the concatenated sector basis."""
    blocks = full_space_blocks(geometry)
    offsets = np.cumsum([0] + [b.dim for b in blocks])
    D = int(offsets[-1])
    mat = np.zeros((D, D), dtype=complex)
    for n, blk in enumerate(blocks):
        tgt = n + (1 if create else -1)
        if not 0 <= tgt <= geometry.n_modes:
            continue
        for j in range(blk.dim):
            e = np.zeros(blk.dim, dtype=complex)
            e[j] = 1
            out = _ladder(StateVector(blk, e), site, spin, create).amplitudes
            mat[offsets[tgt]:offsets[tgt + 1], offsets[n] + j] = out
    return mat
