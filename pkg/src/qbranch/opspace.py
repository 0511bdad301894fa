"""The real Hilbert space K of nearest-neighbour, number-preserving controls.

A control field ``k`` is a sum of single-site terms ``f_x`` (traceless,
Hermitian, commuting with ``N_x``) and nearest-neighbour pair terms ``g_xy``
(traceless, Hermitian, commuting with ``N_x + N_y`` and orthogonal to the
single-site operators of both sites).

Inner products are traces on the two-site space: a single-site term is
measured as ``f (x) I``, so ``<f, f'> = 4 Tr(f f')`` while
``<g, g'> = Tr(g g')``.  With this normalisation the field inner product
equals ``4**(2 - L) * Tr(k k')`` over the full ``4**L`` dimensional Fock
space of an ``L``-site lattice.  :func:`basis_F` and :func:`basis_G` are
orthonormal for this inner product, so ``||k||`` is the Euclidean norm of the
coefficient vector returned by :meth:`ControlField.coefficients`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg

from .errors import CapExceededError, DomainError
from .fock import LOCAL_COUNT, LatticeGeometry, SectorBasis, _encode, enumerate_sector

HERMITIAN_TOL = 1e-10
RANK_RTOL = 1e-8
DEFAULT_CLOSURE_CAP = 2000

_N1 = np.diag(LOCAL_COUNT).astype(complex)
_I4 = np.eye(4, dtype=complex)


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """Hermitian operator on one site (class ``"F"``) or a neighbour pair (``"G"``)."""

    support: tuple
    matrix: np.ndarray
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=complex))
        object.__setattr__(self, "support", tuple(int(s) for s in self.support))
        if self.kind not in ("F", "G"):
            raise DomainError(f"unknown operator class {self.kind!r}")


def hermitian_basis(dim: int) -> list:
    """Frobenius-orthonormal real basis of Hermitian ``dim x dim`` matrices, fixed order."""
    out = []
    for a in range(dim):
        for b in range(a, dim):
            if a == b:
                m = np.zeros((dim, dim), dtype=complex)
                m[a, a] = 1.0
                out.append(m)
            else:
                m = np.zeros((dim, dim), dtype=complex)
                m[a, b] = m[b, a] = 1 / np.sqrt(2)
                out.append(m)
                m = np.zeros((dim, dim), dtype=complex)
                m[a, b] = -1j / np.sqrt(2)
                m[b, a] = 1j / np.sqrt(2)
                out.append(m)
    return out


def _constrained_basis(dim: int, constraints) -> list:
    """Orthonormal basis of Hermitian matrices annihilated by linear ``constraints``.

    Each constraint maps a matrix to a complex array.  The null space is
    found from the constraint matrix, then elementary Hermitian matrices are
    projected into it and Gram-Schmidt orthonormalised in their fixed order.
    """
    elems = hermitian_basis(dim)
    rows = []
    for e in elems:
        vals = np.concatenate([np.ravel(c(e)) for c in constraints])
        rows.append(np.concatenate([vals.real, vals.imag]))
    A = np.array(rows).T  # constraint values as columns of coefficient space
    null = linalg.null_space(A, rcond=1e-12)
    proj = null @ null.T
    accepted = []
    for j in range(len(elems)):
        v = proj[:, j].copy()
        for u in accepted:
            v -= (u @ v) * u
        for u in accepted:
            v -= (u @ v) * u
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            accepted.append(v / nv)
        if len(accepted) == null.shape[1]:
            break
    stack = np.array(elems)
    return [np.tensordot(v, stack, axes=1) for v in accepted]


@lru_cache(maxsize=None)
def _f_matrices() -> tuple:
    mats = _constrained_basis(
        4,
        [lambda h: h @ _N1 - _N1 @ h, lambda h: np.trace(h)],
    )
    # <f, f> = 4 Tr f^2 = 1
    return tuple(m / 2 for m in mats)


@lru_cache(maxsize=None)
def _g_matrices() -> tuple:
    npair = np.kron(_N1, _I4) + np.kron(_I4, _N1)
    f_left = [np.kron(f, _I4) for f in _f_matrices()]
    f_right = [np.kron(_I4, f) for f in _f_matrices()]
    cons = [lambda h: h @ npair - npair @ h, lambda h: np.trace(h)]
    for f in f_left + f_right:
        cons.append(lambda h, f=f: np.trace(f @ h))
    return tuple(_constrained_basis(16, cons))


def basis_F(x: int) -> list:
    """Orthonormal basis (five elements) of single-site controls at ``x``."""
    return [LocalOperator((x,), m, "F") for m in _f_matrices()]


def basis_G(x: int, y: int, geometry: LatticeGeometry | None = None) -> list:
    """Orthonormal basis (59 elements) of pair controls on neighbours ``x < y``."""
    if geometry is not None:
        if not geometry.are_neighbors(x, y):
            raise DomainError(f"sites {x} and {y} are not nearest neighbours")
    elif abs(x - y) != 1:
        raise DomainError(f"sites {x} and {y} are not nearest neighbours")
    if x > y:
        raise DomainError("pair must be ordered x < y")
    return [LocalOperator((x, y), m, "G") for m in _g_matrices()]


def is_f_operator(h, tol=HERMITIAN_TOL) -> bool:
    h = np.asarray(h, dtype=complex)
    return (
        h.shape == (4, 4)
        and np.allclose(h, h.conj().T, atol=tol)
        and abs(np.trace(h)) < tol
        and np.allclose(h @ _N1, _N1 @ h, atol=tol)
    )


def is_g_operator(h, tol=HERMITIAN_TOL) -> bool:
    h = np.asarray(h, dtype=complex)
    if h.shape != (16, 16):
        return False
    npair = np.kron(_N1, _I4) + np.kron(_I4, _N1)
    if not (np.allclose(h, h.conj().T, atol=tol) and abs(np.trace(h)) < tol):
        return False
    if not np.allclose(h @ npair, npair @ h, atol=tol):
        return False
    for f in _f_matrices():
        if abs(np.trace(np.kron(f, _I4) @ h)) > tol or abs(np.trace(np.kron(_I4, f) @ h)) > tol:
            return False
    return True


class OperatorBasis:
    """Concatenated orthonormal basis of K for one lattice.

    Element order: the five F elements of every site in site order, then the
    59 G elements of every neighbour pair in pair order.
    """

    def __init__(self, geometry: LatticeGeometry):
        self.geometry = geometry
        self.sites = list(range(geometry.n_sites))
        self.pairs = geometry.neighbor_pairs()
        self.n_f = len(_f_matrices())
        self.n_g = len(_g_matrices())
        self.size = self.n_f * len(self.sites) + self.n_g * len(self.pairs)

    def slices(self):
        """Yield ``(support, kind, slice)`` for every block of coefficients."""
        off = 0
        for x in self.sites:
            yield (x,), "F", slice(off, off + self.n_f)
            off += self.n_f
        for p in self.pairs:
            yield p, "G", slice(off, off + self.n_g)
            off += self.n_g

    def elements(self) -> list:
        out = []
        for support, kind, _ in self.slices():
            out.extend(basis_F(support[0]) if kind == "F" else basis_G(*support, self.geometry))
        return out


@lru_cache(maxsize=16)
def operator_basis(geometry: LatticeGeometry) -> OperatorBasis:
    return OperatorBasis(geometry)


@dataclass(frozen=True, eq=False)
class ControlField:
    """One element ``k = sum_x f_x + sum_xy g_xy`` of K."""

    geometry: LatticeGeometry
    f_terms: dict = field(default_factory=dict)
    g_terms: dict = field(default_factory=dict)

    def __post_init__(self):
        f_terms = {}
        for x, m in self.f_terms.items():
            self.geometry._check_site(int(x))
            m = np.asarray(m.matrix if isinstance(m, LocalOperator) else m, dtype=complex)
            if not is_f_operator(m):
                raise DomainError(f"term at site {x} is not a traceless number-preserving Hermitian operator")
            f_terms[int(x)] = m
        g_terms = {}
        for pair, m in self.g_terms.items():
            x, y = (int(s) for s in pair)
            if x > y or not self.geometry.are_neighbors(x, y):
                raise DomainError(f"pair {pair} is not an ordered nearest-neighbour pair")
            m = np.asarray(m.matrix if isinstance(m, LocalOperator) else m, dtype=complex)
            if not is_g_operator(m):
                raise DomainError(f"term on pair {pair} is not in the pair class G")
            g_terms[(x, y)] = m
        object.__setattr__(self, "f_terms", f_terms)
        object.__setattr__(self, "g_terms", g_terms)

    @classmethod
    def zero(cls, geometry: LatticeGeometry) -> "ControlField":
        return cls(geometry)

    @classmethod
    def from_coefficients(cls, geometry: LatticeGeometry, coeffs) -> "ControlField":
        coeffs = np.asarray(coeffs, dtype=float)
        basis = operator_basis(geometry)
        if coeffs.shape != (basis.size,):
            raise DomainError(f"expected {basis.size} coefficients, got {coeffs.shape}")
        fm, gm = np.array(_f_matrices()), np.array(_g_matrices())
        f_terms, g_terms = {}, {}
        for support, kind, sl in basis.slices():
            c = coeffs[sl]
            if not np.any(c):
                continue
            if kind == "F":
                f_terms[support[0]] = np.tensordot(c, fm, axes=1)
            else:
                g_terms[support] = np.tensordot(c, gm, axes=1)
        obj = cls.__new__(cls)
        object.__setattr__(obj, "geometry", geometry)
        object.__setattr__(obj, "f_terms", f_terms)
        object.__setattr__(obj, "g_terms", g_terms)
        return obj

    def coefficients(self) -> np.ndarray:
        basis = operator_basis(self.geometry)
        out = np.zeros(basis.size)
        fm, gm = np.array(_f_matrices()), np.array(_g_matrices())
        for support, kind, sl in basis.slices():
            if kind == "F" and support[0] in self.f_terms:
                m = self.f_terms[support[0]]
                out[sl] = 4 * np.einsum("kab,ba->k", fm, m).real
            elif kind == "G" and support in self.g_terms:
                out[sl] = np.einsum("kab,ba->k", gm, self.g_terms[support]).real
        return out

    def norm(self) -> float:
        return float(np.sqrt(max(inner_product(self, self), 0.0)))

    def _combine(self, other, a, b):
        if other.geometry != self.geometry:
            raise DomainError("control fields live on different lattices")
        f = {x: a * m for x, m in self.f_terms.items()}
        for x, m in other.f_terms.items():
            f[x] = f.get(x, 0) + b * m
        g = {p: a * m for p, m in self.g_terms.items()}
        for p, m in other.g_terms.items():
            g[p] = g.get(p, 0) + b * m
        obj = ControlField.__new__(ControlField)
        object.__setattr__(obj, "geometry", self.geometry)
        object.__setattr__(obj, "f_terms", f)
        object.__setattr__(obj, "g_terms", g)
        return obj

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, scalar):
        return self._combine(ControlField.zero(self.geometry), float(scalar), 0.0)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


def inner_product(k: ControlField, kp: ControlField) -> float:
    """``sum_x <f_x, f'_x> + sum_xy <g_xy, g'_xy>``; missing terms count as zero."""
    if k.geometry != kp.geometry:
        raise DomainError("control fields live on different lattices")
    total = 0.0
    for x, m in k.f_terms.items():
        if x in kp.f_terms:
            total += 4 * np.trace(m @ kp.f_terms[x]).real
    for p, m in k.g_terms.items():
        if p in kp.g_terms:
            total += np.trace(m @ kp.g_terms[p]).real
    return float(total)


# ---------------------------------------------------------------------------
# embedding into sector matrices


class _Transitions:
    """For every support: sparse (row, col, new_local, old_local) tables in a sector."""

    def __init__(self, sector: SectorBasis):
        self.sector = sector
        self._site = {}
        self._pair = {}

    def site(self, x):
        if x not in self._site:
            cfg = np.array(self.sector.configs, dtype=np.int64)
            rows, cols, new, old = [], [], [], []
            for l_new in range(4):
                mask = LOCAL_COUNT[cfg[:, x]] == LOCAL_COUNT[l_new]
                src = np.nonzero(mask)[0]
                moved = cfg[src].copy()
                moved[:, x] = l_new
                rows.append(self.sector.lookup(_encode(moved)))
                cols.append(src)
                new.append(np.full(src.size, l_new))
                old.append(cfg[src, x])
            self._site[x] = tuple(np.concatenate(a) for a in (rows, cols, new, old))
        return self._site[x]

    def pair(self, x, y):
        key = (x, y)
        if key not in self._pair:
            cfg = np.array(self.sector.configs, dtype=np.int64)
            count = LOCAL_COUNT[cfg[:, x]] + LOCAL_COUNT[cfg[:, y]]
            old = 4 * cfg[:, x] + cfg[:, y]
            rows, cols, new, olds = [], [], [], []
            for p_new in range(16):
                lx, ly = divmod(p_new, 4)
                src = np.nonzero(count == LOCAL_COUNT[lx] + LOCAL_COUNT[ly])[0]
                moved = cfg[src].copy()
                moved[:, x] = lx
                moved[:, y] = ly
                rows.append(self.sector.lookup(_encode(moved)))
                cols.append(src)
                new.append(np.full(src.size, p_new))
                olds.append(old[src])
            self._pair[key] = tuple(np.concatenate(a) for a in (rows, cols, new, olds))
        return self._pair[key]


@lru_cache(maxsize=64)
def _transitions(sector: SectorBasis) -> _Transitions:
    return _Transitions(sector)


def embed_local(matrix, support, sector: SectorBasis) -> np.ndarray:
    """Sector matrix of a one- or two-site operator tensored with identities."""
    tr = _transitions(sector)
    out = np.zeros((sector.dim, sector.dim), dtype=complex)
    if len(support) == 1:
        rows, cols, new, old = tr.site(support[0])
    else:
        rows, cols, new, old = tr.pair(*support)
    out[rows, cols] += np.asarray(matrix)[new, old]
    return out


def embed(k: ControlField, sector: SectorBasis) -> np.ndarray:
    """Restriction of ``sum f_x + sum g_xy`` to a particle-number sector."""
    if sector.geometry != k.geometry:
        raise DomainError("sector and control field live on different lattices")
    out = np.zeros((sector.dim, sector.dim), dtype=complex)
    for x, m in k.f_terms.items():
        out += embed_local(m, (x,), sector)
    for p, m in k.g_terms.items():
        out += embed_local(m, p, sector)
    return out


@lru_cache(maxsize=16)
def embedded_basis(sector: SectorBasis) -> np.ndarray:
    """Stack ``(P, d, d)`` of every basis element of K restricted to ``sector``."""
    basis = operator_basis(sector.geometry)
    out = np.zeros((basis.size, sector.dim, sector.dim), dtype=complex)
    fm, gm = _f_matrices(), _g_matrices()
    for support, kind, sl in basis.slices():
        mats = fm if kind == "F" else gm
        for j, m in zip(range(sl.start, sl.stop), mats):
            out[j] = embed_local(m, support, sector)
    out.setflags(write=False)
    return out


def embed_full(k: ControlField) -> np.ndarray:
    """Matrix of ``k`` on the full ``4**L`` tensor-product space (site 0 leftmost)."""
    L = k.geometry.n_sites
    if L > 6:
        raise CapExceededError(f"full-space embedding of {L} sites is too large", size=4**L, cap=4**6)
    total = np.zeros((4**L, 4**L), dtype=complex)
    for x, m in k.f_terms.items():
        total += np.kron(np.kron(np.eye(4**x), m), np.eye(4 ** (L - x - 1)))
    for (x, y), m in k.g_terms.items():
        if y != x + 1:
            raise DomainError("full-space embedding supports pairs of adjacent indices only")
        total += np.kron(np.kron(np.eye(4**x), m), np.eye(4 ** (L - y - 1)))
    return total


def trace_inner_product(k: ControlField, kp: ControlField) -> float:
    """``4**(2 - L) Tr(k k')`` over the full Fock space."""
    L = k.geometry.n_sites
    return float(4.0 ** (2 - L) * np.trace(embed_full(k) @ embed_full(kp)).real)


def random_control_field(geometry: LatticeGeometry, rng, scale: float = 1.0, density: float = 1.0) -> ControlField:
    """Gaussian random element of K; ``density`` is the fraction of supports kept."""
    basis = operator_basis(geometry)
    coeffs = rng.normal(size=basis.size) * scale
    for _, _, sl in basis.slices():
        if rng.random() > density:
            coeffs[sl] = 0.0
    return ControlField.from_coefficients(geometry, coeffs)


# ---------------------------------------------------------------------------
# Lie closure


@dataclass
class LieClosureReport:
    geometry: LatticeGeometry
    sectors: list
    sector_dims: list
    generator_count: int
    closure_dimension: int
    expected_dimension: int
    center_rank: int
    passed: bool


def _herm_vec(blocks) -> np.ndarray:
    parts = []
    for X in blocks:
        d = X.shape[-1]
        iu = np.triu_indices(d, 1)
        diag = np.real(np.diagonal(X, axis1=-2, axis2=-1))
        up = X[..., iu[0], iu[1]]
        parts += [diag, np.sqrt(2) * up.real, np.sqrt(2) * up.imag]
    return np.concatenate(parts, axis=-1)


def _herm_unvec(vecs: np.ndarray, dims) -> list:
    out = []
    off = 0
    for d in dims:
        iu = np.triu_indices(d, 1)
        m = len(iu[0])
        diag = vecs[..., off:off + d]
        re = vecs[..., off + d:off + d + m] / np.sqrt(2)
        im = vecs[..., off + d + m:off + d + 2 * m] / np.sqrt(2)
        off += d + 2 * m
        X = np.zeros(vecs.shape[:-1] + (d, d), dtype=complex)
        X[..., np.arange(d), np.arange(d)] = diag
        X[..., iu[0], iu[1]] = re + 1j * im
        X[..., iu[1], iu[0]] = re - 1j * im
        out.append(X)
    return out


def _extend_basis(Q: np.ndarray, cand: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal directions of ``cand`` rows outside ``span(Q columns)``."""
    R = cand - (cand @ Q) @ Q.T if Q.shape[1] else cand.copy()
    if Q.shape[1]:
        R -= (R @ Q) @ Q.T
    keep = np.linalg.norm(R, axis=1) > tol
    if not np.any(keep):
        return np.zeros((Q.shape[0], 0))
    U, s, _ = np.linalg.svd(R[keep].T, full_matrices=False)
    return U[:, s > tol]


def lie_closure(geometry: LatticeGeometry, n_sectors=None, cap: int = DEFAULT_CLOSURE_CAP,
                chunk: int = 24) -> LieClosureReport:
    """Dimension of the Lie algebra generated by K, restricted to the given sectors.

    Generators are projected onto their per-sector traceless parts (the
    sector-scalar parts are central and are reported as ``center_rank``);
    the span is closed under ``i[g, .]`` for every generator ``g`` until no
    new direction appears.  The result is compared with
    ``sum (d_n**2 - 1)`` over the sectors ``1 <= n <= 2L - 1``.
    """
    top = geometry.n_modes
    if n_sectors is None:
        n_sectors = list(range(1, top))
    n_sectors = sorted(set(int(n) for n in n_sectors))
    for n in n_sectors:
        if not 0 <= n <= top:
            raise DomainError(f"sector n={n} does not exist")
    sectors = [enumerate_sector(geometry, n) for n in n_sectors]
    size = sum(s.dim ** 2 for s in sectors)
    if size > cap:
        raise CapExceededError(
            f"closure space of dimension {size} exceeds cap {cap}", size=size, cap=cap
        )
    dims = [s.dim for s in sectors]
    expected = sum(d * d - 1 for d, n in zip(dims, n_sectors) if 1 <= n <= top - 1)
    gen_blocks = [embedded_basis(s) for s in sectors]
    n_gen = operator_basis(geometry).size

    traces = np.array([np.real(np.trace(b, axis1=1, axis2=2)) for b in gen_blocks]).T
    center_rank = int(np.linalg.matrix_rank(traces, tol=1e-9)) if traces.size else 0

    proj = [b - np.trace(b, axis1=1, axis2=2)[:, None, None] * np.eye(b.shape[1]) / b.shape[1]
            for b in gen_blocks]
    D = sum(d * d for d in dims)
    if D == 0 or expected == 0:
        return LieClosureReport(geometry, n_sectors, dims, n_gen, 0, expected, center_rank, expected == 0)

    V = _herm_vec(proj)
    scale = max(np.linalg.norm(V, axis=1).max(), 1.0)
    tol = RANK_RTOL * scale
    Q = _extend_basis(np.zeros((D, 0)), V, tol)
    generators = _herm_unvec(Q.T, dims)
    frontier = Q.copy()
    while frontier.shape[1] and Q.shape[1] < expected:
        new_cols = []
        for start in range(0, frontier.shape[1], chunk):
            F = _herm_unvec(frontier[:, start:start + chunk].T, dims)
            comm = []
            for G, X in zip(generators, F):
                a = G[:, None] @ X[None]
                comm.append(1j * (a - a.conj().transpose(0, 1, 3, 2)))
            C = _herm_vec([c.reshape(-1, c.shape[-2], c.shape[-1]) for c in comm])
            new = _extend_basis(Q, C, tol)
            if new.shape[1]:
                Q = np.hstack([Q, new])
                new_cols.append(new)
            if Q.shape[1] >= expected:
                break
        frontier = np.hstack(new_cols) if new_cols else np.zeros((D, 0))
    dim = Q.shape[1]
    return LieClosureReport(geometry, n_sectors, dims, n_gen, dim, expected, center_rank, dim == expected)


_FLIP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, -1]], dtype=complex)


def spin_flip_field(k: ControlField) -> ControlField:
    """Conjugate ``k`` by the global up <-> down relabelling (see :func:`qbranch.fock.spin_flip`)."""
    u2 = np.kron(_FLIP, _FLIP)
    return ControlField(
        k.geometry,
        f_terms={x: _FLIP @ m @ _FLIP.T for x, m in k.f_terms.items()},
        g_terms={p: u2 @ m @ u2.T for p, m in k.g_terms.items()},
    )
