"""Schmidt spectra across lattice cuts, their rotation rates, and angle audits.

A cut ``p`` splits the lattice into the sites ``<= p`` (left) and the rest.
Because every control preserves particle number, the Schmidt decomposition
splits into blocks labelled by the left particle number ``N_L``.  The
spectrum vector lists the blocks that can hold at most one Schmidt value
(``N_L = 0`` then ``N_L = n``) first, then the remaining blocks in increasing
``N_L``, each sorted in decreasing order.  For two particles this puts
``(0, 2)`` at index 0, ``(2, 0)`` at index 1 and the ``(1, 1)`` values after.

Under ``d psi/dt = -i k psi`` a Schmidt value moves at rate
``u_i = Im <phi_i chi_i| k |psi>`` and the spectrum rotates at angular speed
``|theta_p| = ||u||``.  Summed over cuts this speed is at most
``2 sqrt(n) ||k||`` (``2 sqrt(2) ||k||`` for two particles).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..errors import AuditToleranceError, DomainError
from ..fock import LOCAL_COUNT, SectorBasis, StateVector, _encode
from ..opspace import embed, embed_local
from .trajectory import ControlTrajectory, cost, overlap

DEGENERACY_TOL = 1e-7
ZERO_TOL = 1e-9


def rate_constant(n: int) -> float:
    """Constant ``c`` in ``sum_p |theta_p| <= c ||k||``."""
    return 2.0 * np.sqrt(max(n, 1))


@dataclass(frozen=True)
class _CutBlock:
    n_left: int
    states: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    shape: tuple


def _block_order(n: int) -> list:
    if n == 0:
        return [0]
    return [0, n] + list(range(1, n))


@lru_cache(maxsize=256)
def _cut_blocks(sector: SectorBasis, p: int) -> tuple:
    L = sector.geometry.n_sites
    if not 0 <= p < L - 1:
        raise DomainError(f"cut {p} outside 0..{L - 2}")
    cfg = np.asarray(sector.configs, dtype=np.int64)
    left = _encode(cfg[:, : p + 1])
    right = _encode(cfg[:, p + 1:])
    n_left = LOCAL_COUNT[cfg[:, : p + 1]].sum(axis=1)
    blocks = []
    for nl in _block_order(sector.n):
        idx = np.nonzero(n_left == nl)[0]
        if idx.size == 0:
            blocks.append(_CutBlock(nl, idx, idx, idx, (0, 0)))
            continue
        lu, rows = np.unique(left[idx], return_inverse=True)
        ru, cols = np.unique(right[idx], return_inverse=True)
        blocks.append(_CutBlock(nl, idx, rows, cols, (lu.size, ru.size)))
    return tuple(blocks)


@dataclass
class SchmidtSpectrum:
    """Schmidt values of one cut with ``(N_left, N_right)`` labels."""

    cut: int
    values: np.ndarray
    labels: list
    degenerate: bool = False
    _svd: list = field(default_factory=list, repr=False)

    def block(self, n_left: int) -> np.ndarray:
        mask = np.array([lab[0] == n_left for lab in self.labels], dtype=bool)
        return self.values[mask] if mask.size else np.zeros(0)

    def block_maxima(self) -> dict:
        out = {}
        for (nl, _), v in zip(self.labels, self.values):
            out[nl] = max(out.get(nl, 0.0), float(v))
        return out


def _block_matrix(amps, blk: _CutBlock) -> np.ndarray:
    M = np.zeros(blk.shape, dtype=complex)
    M[blk.rows, blk.cols] = amps[blk.states]
    return M


def _is_degenerate(s: np.ndarray) -> bool:
    if s.size == 0:
        return False
    if np.any(s < ZERO_TOL) and s.size > 0:
        return True
    return bool(np.any(np.abs(np.diff(s)) < DEGENERACY_TOL * max(s[0], 1e-300)))


def schmidt_spectrum(psi: StateVector, p: int, keep_vectors: bool = False) -> SchmidtSpectrum:
    """Block-wise SVD of ``psi`` across cut ``p``."""
    blocks = _cut_blocks(psi.sector, p)
    n = psi.n
    values, labels, svd = [], [], []
    degenerate = False
    for blk in blocks:
        if blk.states.size == 0:
            continue
        M = _block_matrix(psi.amplitudes, blk)
        if keep_vectors:
            U, s, Vh = np.linalg.svd(M, full_matrices=True)
            svd.append((blk, U, s, Vh))
        else:
            s = np.linalg.svd(M, compute_uv=False)
        degenerate |= _is_degenerate(s) and np.any(s > ZERO_TOL)
        values.extend(s.tolist())
        labels.extend([(blk.n_left, n - blk.n_left)] * s.size)
    return SchmidtSpectrum(p, np.array(values), labels, bool(degenerate), svd)


def spectra(psi: StateVector, cuts=None) -> list:
    L = psi.geometry.n_sites
    cuts = range(L - 1) if cuts is None else cuts
    return [schmidt_spectrum(psi, p) for p in cuts]


def spectral_angle(a: SchmidtSpectrum, b: SchmidtSpectrum) -> float:
    """Angle between two spectrum vectors of the same cut and sector."""
    if a.labels != b.labels:
        raise DomainError("spectra belong to different sectors or cuts")
    # chord form: accurate for nearly equal vectors
    chord = np.linalg.norm(a.values - b.values)
    return float(2 * np.arcsin(min(chord / 2, 1.0)))


def endpoint_angles(start: StateVector, target: StateVector) -> np.ndarray:
    """Per-cut angle between the spectra of two states."""
    L = start.geometry.n_sites
    return np.array([spectral_angle(schmidt_spectrum(start, p), schmidt_spectrum(target, p))
                     for p in range(L - 1)])


def product_angle(psi: StateVector, p: int) -> float:
    """Smallest angle from the spectrum of ``psi`` to any spectrum with one value per block.

    For two particles localized on single sites (and, more generally, for
    product states whose mixed block has rank one) this is a lower bound on
    the rotation needed at cut ``p``.
    """
    spec = schmidt_spectrum(psi, p)
    top, rest = 0.0, 0.0
    for nl in dict.fromkeys(lab[0] for lab in spec.labels):
        vals = spec.block(nl)
        top += vals.max() ** 2
        rest += (vals ** 2).sum() - vals.max() ** 2
    return float(np.arctan2(np.sqrt(max(rest, 0.0)), np.sqrt(top)))


@dataclass
class RotationRates:
    cut: int
    rates: np.ndarray
    theta: float
    spectrum: SchmidtSpectrum
    degenerate: bool


def _crossing_terms(k, p: int) -> list:
    return [(pair, m) for pair, m in k.g_terms.items() if min(pair) <= p < max(pair)]


def _herm_eigs(B: np.ndarray) -> np.ndarray:
    return np.sort(np.linalg.eigvalsh(0.5 * (B + B.conj().T)))[::-1]


def rotation_rates(psi: StateVector, k, p: int) -> RotationRates:
    """Rates ``ds_i/dt`` of the spectrum at cut ``p`` under ``d psi/dt = -i k psi``.

    Only pair terms straddling the cut contribute.  Degenerate Schmidt
    values are handled by diagonalising the rate within their common
    subspace; vanishing values get their one-sided (forward) rates.
    """
    spec = schmidt_spectrum(psi, p, keep_vectors=True)
    terms = _crossing_terms(k, p)
    if terms:
        K = sum(embed_local(m, pair, psi.sector) for pair, m in terms)
        dpsi = -1j * (K @ psi.amplitudes)
    else:
        dpsi = np.zeros_like(psi.amplitudes)
    rates = []
    for blk, U, s, Vh in spec._svd:
        B = U.conj().T @ _block_matrix(dpsi, blk) @ Vh.conj().T
        u = np.zeros(s.size)
        rank = int(np.sum(s > ZERO_TOL))
        i = 0
        while i < rank:
            j = i + 1
            while j < rank and abs(s[j] - s[i]) < DEGENERACY_TOL * max(s[0], 1e-300):
                j += 1
            if j - i == 1:
                u[i] = B[i, i].real
            else:
                u[i:j] = _herm_eigs(B[i:j, i:j])
            i = j
        if rank < s.size:
            u[rank:] = np.linalg.svd(B[rank:, rank:], compute_uv=False)[: s.size - rank]
        rates.extend(u.tolist())
    rates = np.array(rates)
    return RotationRates(p, rates, float(np.linalg.norm(rates)), spec, spec.degenerate)


@dataclass
class RotationAudit:
    """Rotation of Schmidt spectra along a trajectory.

    ``per_cut[p]`` is the accumulated angle at cut ``p`` (a lower bound on
    ``int |theta_p| dt``); ``lower_bound = total / rate_constant(n)`` is a
    lower bound on the trajectory cost.
    """

    per_cut: np.ndarray
    total: float
    cost: float
    lower_bound: float
    bound_ratio: float
    endpoint: np.ndarray
    substeps: int
    max_substep_ratio: float


def angle_audit(traj: ControlTrajectory, psi0: StateVector, target: StateVector | None = None,
                max_arc: float = 0.05, tol: float = 1e-9) -> RotationAudit:
    """Accumulate spectrum rotation angles along ``traj`` starting from ``psi0``.

    Each step is subdivided so that its rotation per substep is bounded by
    ``max_arc``; on every substep the summed angle is checked against the
    rate bound ``rate_constant(n) * ||k|| * dt``.
    """
    if abs(psi0.norm() - 1) > 1e-9:
        raise DomainError("initial state must be normalized")
    L = psi0.geometry.n_sites
    c = rate_constant(psi0.n)
    cuts = list(range(L - 1))
    prev = [schmidt_spectrum(psi0, p) for p in cuts]
    first = prev
    per_cut = np.zeros(len(cuts))
    amps = psi0.amplitudes
    n_sub_total = 0
    worst = 0.0
    for dt, k in traj.steps:
        H = embed(k, psi0.sector)
        lam, V = np.linalg.eigh(H)
        knorm = k.norm()
        n_sub = max(1, int(np.ceil(c * knorm * dt / max_arc)))
        h = dt / n_sub
        Usub = (V * np.exp(-1j * h * lam)) @ V.conj().T
        budget = c * knorm * h
        for _ in range(n_sub):
            amps = Usub @ amps
            cur = [schmidt_spectrum(StateVector(psi0.sector, amps), p) for p in cuts]
            ang = np.array([spectral_angle(a, b) for a, b in zip(prev, cur)])
            if ang.sum() > budget + tol:
                raise AuditToleranceError(
                    f"substep rotation {ang.sum():.3e} exceeds rate bound {budget:.3e}"
                )
            if budget > 0:
                worst = max(worst, ang.sum() / budget)
            per_cut += ang
            prev = cur
            n_sub_total += 1
    final = StateVector(psi0.sector, amps / np.linalg.norm(amps))
    if target is not None and overlap(final, target) < 1 - 1e-9:
        raise DomainError("trajectory does not reach the target state")
    endpoint = np.array([spectral_angle(a, b) for a, b in zip(first, prev)])
    if np.any(per_cut < endpoint - 1e-8):
        raise AuditToleranceError("accumulated angles fall short of endpoint angles")
    total = float(per_cut.sum())
    cst = cost(traj)
    return RotationAudit(
        per_cut=per_cut,
        total=total,
        cost=cst,
        lower_bound=total / c,
        bound_ratio=total / (c * cst) if cst > 0 else 0.0,
        endpoint=endpoint,
        substeps=n_sub_total,
        max_substep_ratio=worst,
    )
