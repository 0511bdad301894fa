"""Branch decompositions that minimize weighted complexity minus ``b`` times entropy.

For an orthogonal decomposition ``psi = sum_i psi_i`` with weights
``w_i = <psi_i|psi_i>`` the functional is

    Q = sum_i w_i C(psi_i / |psi_i|) - b sum_i w_i ln w_i

A branch splits in two (weight fraction ``rho`` for the first child) when
the complexity it saves exceeds ``-b rho ln rho - b (1 - rho) ln(1 - rho)``.

Complexities come from an *oracle*: any callable mapping a normalized
:class:`~qbranch.fock.StateVector` to a nonnegative float.  The default
:func:`surrogate_oracle` is the cut-angle estimate of the distance to the
product states (zero for product-certified vectors); :func:`optimizer_oracle`
wraps the trajectory optimizer.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .complexity.optimize import OptimizerConfig, complexity_of_state, product_surrogate
from .errors import CapExceededError, DomainError, InconsistencyError
from .fock import LOCAL_COUNT, StateVector

log = logging.getLogger(__name__)

WEIGHT_TOL = 1e-12
ORTHO_TOL = 1e-9
STABLE_TOL = 1e-6


# ---------------------------------------------------------------------------
# oracles


def surrogate_oracle(psi: StateVector) -> float:
    return product_surrogate(psi)


def optimizer_oracle(config: OptimizerConfig | None = None):
    """Oracle returning the optimizer's upper estimate of the state complexity."""
    cfg = config or OptimizerConfig(restarts=2)

    def oracle(psi: StateVector) -> float:
        return complexity_of_state(psi, cfg).upper

    return oracle


class _CachedOracle:
    def __init__(self, oracle):
        self.oracle = oracle
        self.cache = {}

    def __call__(self, psi: StateVector) -> float:
        key = (psi.sector.geometry, psi.n, psi.product, psi.amplitudes.tobytes())
        if key not in self.cache:
            val = float(self.oracle(psi))
            if val < 0:
                raise DomainError("complexity oracle returned a negative value")
            self.cache[key] = val
        return self.cache[key]


def _resolve_oracle(oracle):
    if oracle is None or oracle == "surrogate":
        oracle = surrogate_oracle
    elif oracle == "optimizer":
        oracle = optimizer_oracle()
    return oracle if isinstance(oracle, _CachedOracle) else _CachedOracle(oracle)


# ---------------------------------------------------------------------------
# decompositions


def _entropy_term(weights) -> float:
    w = np.asarray(weights, dtype=float)
    w = w[w > 0]
    return float(-(w * np.log(w)).sum())


@dataclass
class BranchDecomposition:
    """Orthogonal, unnormalized branches of a normalized parent."""

    branches: list
    b: float
    complexities: list
    accepted: list = field(default_factory=list)   # (gain, threshold, rho) of accepted splits
    q_trace: list = field(default_factory=list)

    @property
    def weights(self) -> np.ndarray:
        return np.array([br.norm() ** 2 for br in self.branches])

    @property
    def mean_complexity(self) -> float:
        return float(self.weights @ np.asarray(self.complexities, dtype=float))

    @property
    def entropy(self) -> float:
        return _entropy_term(self.weights)

    def total(self) -> StateVector:
        out = self.branches[0]
        for br in self.branches[1:]:
            out = out + br
        return out

    def supports(self) -> list:
        return [tuple(np.nonzero(np.abs(br.amplitudes) > 1e-12)[0]) for br in self.branches]

    def check(self, parent: StateVector | None = None, tol: float = ORTHO_TOL):
        """Raise :class:`InconsistencyError` unless the branches are orthogonal and reassemble."""
        for i, j in itertools.combinations(range(len(self.branches)), 2):
            if abs(self.branches[i].vdot(self.branches[j])) > tol:
                raise InconsistencyError(f"branches {i} and {j} are not orthogonal")
        if parent is not None:
            if np.abs(self.total().amplitudes - parent.amplitudes).max() > tol:
                raise InconsistencyError("branches do not sum to the parent state")
        return True


def q_value(decomp: BranchDecomposition) -> float:
    """``sum w_i C_i - b sum w_i ln w_i``; zero-weight branches drop out."""
    w = decomp.weights
    C = np.asarray(decomp.complexities, dtype=float)
    keep = w > 0
    return float(w[keep] @ C[keep] + decomp.b * _entropy_term(w))


def make_decomposition(branches, b: float, oracle=None) -> BranchDecomposition:
    """Decomposition of given branches with complexities from ``oracle``."""
    if b <= 0:
        raise DomainError("branching threshold b must be positive")
    oracle = _resolve_oracle(oracle)
    branches = list(branches)
    comps = [oracle(br.normalized()) if br.norm() ** 2 > WEIGHT_TOL else 0.0 for br in branches]
    return BranchDecomposition(branches, float(b), comps)


@dataclass(frozen=True)
class SplitGain:
    gain: float
    threshold: float
    splits: bool


def split_threshold(rho: float, b: float) -> float:
    """``-b rho ln rho - b (1 - rho) ln(1 - rho)``."""
    if not 0 <= rho <= 1:
        raise DomainError("rho must lie in [0, 1]")
    terms = [x * np.log(x) for x in (rho, 1 - rho) if x > 0]
    return float(-b * sum(terms))


def split_gain(C: float, C0: float, C1: float, rho: float, b: float) -> SplitGain:
    """Complexity saved by a split, the entropy threshold, and whether the split happens."""
    if not 0 < rho < 1:
        raise DomainError("rho must lie strictly between 0 and 1")
    gain = C - rho * C0 - (1 - rho) * C1
    thr = split_threshold(rho, b)
    return SplitGain(float(gain), thr, bool(gain > thr))


# ---------------------------------------------------------------------------
# candidate splits


@dataclass(frozen=True)
class SearchConfig:
    rotation_alphas: int = 6       # interior mixing angles per candidate projector
    rotation_phases: int = 4
    rotate_top: int = 3            # projector candidates refined by rotations
    random_rotations: int = 0      # extra random two-way splits per branch
    min_weight: float = 1e-3       # smallest child weight fraction a split may create
    seed: int = 0
    max_branches: int = 64
    max_merge_rounds: int = 8
    cap: int = 5000                # largest sector dimension handled


def candidate_masks(sector) -> list:
    """Diagonal projectors (boolean masks over the basis) used to propose splits."""
    cfg = np.asarray(sector.configs, dtype=np.int64)
    modes = np.asarray(sector.modes)
    L = cfg.shape[1]
    masks = []
    for x in range(L):
        for v in range(4):
            masks.append(cfg[:, x] == v)
    n_up = modes[:, 0::2].sum(axis=1)
    for v in np.unique(n_up):
        masks.append(n_up == v)
    count = LOCAL_COUNT[cfg]
    up, dn = modes[:, 0::2].astype(int), modes[:, 1::2].astype(int)
    for p in range(L - 1):
        left = count[:, : p + 1].sum(axis=1)
        for v in np.unique(left):
            masks.append(left == v)
        for arr in (up, dn):
            ls = arr[:, : p + 1].sum(axis=1)
            for v in np.unique(ls):
                masks.append(ls == v)
    # drop duplicates and trivial masks, keep first occurrence
    seen, out = set(), []
    for m in masks:
        if m.all() or not m.any():
            continue
        key = np.packbits(m).tobytes()
        key_c = np.packbits(~m).tobytes()
        if key in seen or key_c in seen:
            continue
        seen.add(key)
        out.append(m)
    return out


@dataclass
class _Split:
    child0: np.ndarray
    child1: np.ndarray
    rho: float
    gain: float
    threshold: float

    @property
    def margin(self):
        return self.gain - self.threshold


def _support_key(vec):
    return tuple(np.nonzero(np.abs(vec) > 1e-12)[0])


def _evaluate(sector, parent_C, c0, c1, b, oracle, others=(), min_weight=WEIGHT_TOL):
    w0 = np.vdot(c0, c0).real
    w1 = np.vdot(c1, c1).real
    W = w0 + w1
    if min(w0, w1) / W < max(min_weight, WEIGHT_TOL):
        return None
    # children must stay orthogonal to the remaining branches
    for o in others:
        if abs(np.vdot(o, c0)) > 1e-10 * np.sqrt(w0 * np.vdot(o, o).real):
            return None
    rho = w0 / W
    C0 = oracle(StateVector(sector, c0 / np.sqrt(w0)))
    C1 = oracle(StateVector(sector, c1 / np.sqrt(w1)))
    g = split_gain(parent_C, C0, C1, rho, b)
    return _Split(c0, c1, rho, g.gain, g.threshold)


def _rotations(a, c, alphas, phases):
    """Orthogonal two-way splits of ``a + c`` inside ``span(a, c)``."""
    na, nc = np.linalg.norm(a), np.linalg.norm(c)
    ea, ec = a / na, c / nc
    psi = a + c
    for beta in np.linspace(0, np.pi / 2, alphas + 2)[1:-1]:
        for phi in np.linspace(0, 2 * np.pi, phases, endpoint=False):
            e0 = np.cos(beta) * ea + np.exp(1j * phi) * np.sin(beta) * ec
            e1 = -np.exp(-1j * phi) * np.sin(beta) * ea + np.cos(beta) * ec
            yield np.vdot(e0, psi) * e0, np.vdot(e1, psi) * e1


def _best_split(branch: StateVector, C: float, b: float, oracle, masks, cfg: SearchConfig, rng,
                others=()):
    """Best accepted two-way split of ``branch`` (``None`` if no candidate passes).

    Projector candidates are tried first; rotations inside the span of the
    two children refine only projector splits that already pass the split
    condition.  Children must remain orthogonal to ``others``.
    """
    amps = branch.amplitudes
    W = np.vdot(amps, amps).real
    if W < WEIGHT_TOL:
        return None
    sector = branch.sector
    unit = amps / np.sqrt(W)
    others = [o / np.linalg.norm(o) for o in others if np.vdot(o, o).real > WEIGHT_TOL]
    cands = []
    for m in masks:
        c0 = np.where(m, unit, 0)
        s = _evaluate(sector, C, c0, unit - c0, b, oracle, others, cfg.min_weight)
        if s is not None:
            cands.append(s)
    passing = sorted((s for s in cands if s.margin > 1e-12), key=lambda s: -s.margin)
    for s in passing[: cfg.rotate_top]:
        for c0, c1 in _rotations(s.child0, s.child1, cfg.rotation_alphas, cfg.rotation_phases):
            r = _evaluate(sector, C, c0, c1, b, oracle, others, cfg.min_weight)
            if r is not None:
                cands.append(r)
    for _ in range(cfg.random_rotations):
        v = rng.normal(size=unit.size) + 1j * rng.normal(size=unit.size)
        v -= np.vdot(unit, v) * unit
        for o in others:
            v -= np.vdot(o, v) * o
        e0 = (unit + v / np.linalg.norm(v)) / np.sqrt(2)
        c0 = np.vdot(e0, unit) * e0
        r = _evaluate(sector, C, c0, unit - c0, b, oracle, others, cfg.min_weight)
        if r is not None:
            cands.append(r)
    accepted = [s for s in cands if s.margin > 1e-12]
    if not accepted:
        return None
    best = max(s.margin for s in accepted)
    ties = [s for s in accepted if s.margin >= best - 1e-12]
    s = min(ties, key=lambda s: (_support_key(s.child0), _support_key(s.child1)))
    scale = np.sqrt(W)
    return _Split(s.child0 * scale, s.child1 * scale, s.rho, s.gain, s.threshold)


def _sorted(decomp: BranchDecomposition) -> BranchDecomposition:
    order = sorted(range(len(decomp.branches)), key=lambda i: _support_key(decomp.branches[i].amplitudes))
    decomp.branches = [decomp.branches[i] for i in order]
    decomp.complexities = [decomp.complexities[i] for i in order]
    return decomp


def optimize_branches(psi: StateVector, b: float, oracle=None,
                      config: SearchConfig | None = None) -> BranchDecomposition:
    """Greedy recursive two-way splitting followed by merge re-tests.

    Every accepted split strictly lowers Q.  After splitting stops, pairs
    of branches are merged whenever that lowers Q, and splitting resumes;
    the loop ends when neither move helps.
    """
    cfg = config or SearchConfig()
    if b <= 0:
        raise DomainError("branching threshold b must be positive")
    if abs(psi.norm() - 1) > 1e-9:
        raise DomainError("parent state must be normalized")
    if psi.sector.dim > cfg.cap:
        raise CapExceededError(f"sector dimension {psi.sector.dim} exceeds cap {cfg.cap}",
                               size=psi.sector.dim, cap=cfg.cap)
    oracle = _resolve_oracle(oracle)
    rng = np.random.default_rng(cfg.seed)
    masks = candidate_masks(psi.sector)
    decomp = BranchDecomposition([psi], float(b), [oracle(psi)])
    decomp.q_trace.append(q_value(decomp))

    def split_all():
        changed = False
        queue = list(range(len(decomp.branches)))
        while queue and len(decomp.branches) < cfg.max_branches:
            i = queue.pop(0)
            br = decomp.branches[i]
            others = [o.amplitudes for k, o in enumerate(decomp.branches) if k != i]
            s = _best_split(br, decomp.complexities[i], b, oracle, masks, cfg, rng, others)
            if s is None:
                continue
            q_before = q_value(decomp)
            b0 = StateVector(br.sector, s.child0)
            b1 = StateVector(br.sector, s.child1)
            decomp.branches[i] = b0
            decomp.complexities[i] = oracle(b0.normalized())
            decomp.branches.append(b1)
            decomp.complexities.append(oracle(b1.normalized()))
            q_after = q_value(decomp)
            if not q_after < q_before:
                raise InconsistencyError("accepted split did not lower Q")
            decomp.accepted.append((s.gain, s.threshold, s.rho))
            decomp.q_trace.append(q_after)
            queue += [i, len(decomp.branches) - 1]
            changed = True
        return changed

    def merge_once():
        n = len(decomp.branches)
        best = None
        for i, j in itertools.combinations(range(n), 2):
            bi, bj = decomp.branches[i], decomp.branches[j]
            wi, wj = bi.norm() ** 2, bj.norm() ** 2
            merged = bi + bj
            Cm = oracle(merged.normalized())
            g = split_gain(Cm, decomp.complexities[i], decomp.complexities[j], wi / (wi + wj), b)
            if g.gain < g.threshold - 1e-12:
                margin = g.threshold - g.gain
                if best is None or margin > best[0]:
                    best = (margin, i, j, merged, Cm)
        if best is None:
            return False
        _, i, j, merged, Cm = best
        q_before = q_value(decomp)
        decomp.branches[i] = merged
        decomp.complexities[i] = Cm
        del decomp.branches[j]
        del decomp.complexities[j]
        q_after = q_value(decomp)
        if not q_after < q_before + 1e-12:
            raise InconsistencyError("merge did not lower Q")
        decomp.q_trace.append(q_after)
        return True

    split_all()
    for _ in range(cfg.max_merge_rounds):
        merged = False
        while merge_once():
            merged = True
        if not merged or not split_all():
            break
    decomp = _sorted(decomp)
    decomp.check(psi)
    return decomp


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]


def exhaustive_branches(psi: StateVector, b: float, oracle=None, max_support: int = 8,
                        rotation_alphas: int = 8, rotation_phases: int = 4) -> BranchDecomposition:
    """Validation oracle: best Q over all partitions of the support into basis-state groups
    and over discretized two-way rotations of every bipartition."""
    oracle = _resolve_oracle(oracle)
    amps = psi.amplitudes
    support = list(np.nonzero(np.abs(amps) > 1e-12)[0])
    if len(support) > max_support:
        raise CapExceededError(f"support {len(support)} exceeds {max_support}",
                               size=len(support), cap=max_support)
    sector = psi.sector

    def decomp_of(vecs):
        brs = [StateVector(sector, v) for v in vecs]
        comps = [oracle(br.normalized()) for br in brs]
        return BranchDecomposition(brs, float(b), comps)

    best, best_q = None, np.inf
    for part in _set_partitions(support):
        vecs = []
        for block in part:
            v = np.zeros_like(amps)
            v[block] = amps[block]
            vecs.append(v)
        d = decomp_of(vecs)
        q = q_value(d)
        if q < best_q - 1e-12 or (abs(q - best_q) <= 1e-12 and len(vecs) < len(best.branches)):
            best, best_q = d, q
    for r in range(1, len(support)):
        for block in itertools.combinations(support, r):
            if support[0] not in block:
                continue
            a = np.zeros_like(amps)
            a[list(block)] = amps[list(block)]
            for c0, c1 in _rotations(a, amps - a, rotation_alphas, rotation_phases):
                d = decomp_of([c0, c1])
                q = q_value(d)
                if q < best_q - 1e-12:
                    best, best_q = d, q
    return _sorted(best)


# ---------------------------------------------------------------------------
# late-time branching


@dataclass
class BranchHistory:
    """Decompositions at increasing ``t_out`` pulled back to ``t_in``."""

    t_in: float
    schedule: list
    decompositions: list
    pulled_back: list
    stabilized: bool
    stable_index: int | None
    status: str

    @property
    def ensemble(self) -> list:
        """Pulled-back branches at the point where the history stabilized (else the last one)."""
        i = self.stable_index if self.stable_index is not None else len(self.pulled_back) - 1
        return self.pulled_back[i]

    @property
    def weights(self) -> np.ndarray:
        return np.array([br.norm() ** 2 for br in self.ensemble])


def _same_ensemble(A, B, tol) -> bool:
    if len(A) != len(B):
        return False
    wa = np.array([a.norm() ** 2 for a in A])
    wb = np.array([b.norm() ** 2 for b in B])
    ov = np.array([[abs(a.vdot(b)) for b in B] for a in A])
    norm = np.sqrt(np.outer(wa, wb))
    fid = ov / np.where(norm > 0, norm, 1)
    rows, cols = linear_sum_assignment(-fid)
    return bool(np.all(1 - fid[rows, cols] < tol) and np.all(np.abs(wa[rows] - wb[cols]) < tol))


def late_time_branch(psi_in: StateVector, H, t_in: float, schedule, b: float, oracle=None,
                     config: SearchConfig | None = None, tol: float = STABLE_TOL) -> BranchHistory:
    """Branch ``psi(t_out)`` for every ``t_out`` in ``schedule`` and pull the branches back to ``t_in``.

    The history is stable once two consecutive schedule points give the same
    number of branches with matching pulled-back weights and states (within
    ``tol``).  No exception is raised when that never happens; the status
    reports it instead.
    """
    H = np.asarray(H, dtype=complex)
    if H.shape != (psi_in.sector.dim,) * 2:
        raise DomainError("Hamiltonian does not match the sector")
    if not np.allclose(H, H.conj().T, atol=1e-12):
        raise DomainError("Hamiltonian must be Hermitian")
    schedule = [float(t) for t in schedule]
    if any(t2 <= t1 for t1, t2 in zip(schedule, schedule[1:])):
        raise DomainError("schedule must be strictly increasing")
    if schedule and schedule[0] < t_in:
        raise DomainError("schedule must start at or after t_in")
    oracle = _resolve_oracle(oracle)
    lam, V = np.linalg.eigh(H)
    c_in = V.conj().T @ psi_in.amplitudes

    def prop(vec_eig, dt):
        return V @ (np.exp(-1j * lam * dt) * vec_eig)

    decomps, pulled = [], []
    stable_index = None
    for idx, t in enumerate(schedule):
        dt = t - t_in
        psi_out = StateVector(psi_in.sector, prop(c_in, dt))
        psi_out = psi_out.normalized()
        dec = optimize_branches(psi_out, b, oracle, config)
        back = [StateVector(psi_in.sector, prop(V.conj().T @ br.amplitudes, -dt)) for br in dec.branches]
        decomps.append(dec)
        pulled.append(back)
        if stable_index is None and idx > 0 and _same_ensemble(pulled[idx - 1], back, tol):
            stable_index = idx - 1
        elif stable_index is not None and not _same_ensemble(pulled[stable_index], back, tol):
            stable_index = None
    stabilized = stable_index is not None
    status = "stabilized" if stabilized else "not-converged"
    if not stabilized:
        log.info("late-time branching did not stabilize over %d schedule points", len(schedule))
    return BranchHistory(t_in, schedule, decomps, pulled, stabilized, stable_index, status)


def evolve_branch(branch: StateVector, H, dt: float) -> StateVector:
    """``exp(-i dt H) branch`` (no further branching)."""
    lam, V = np.linalg.eigh(np.asarray(H, dtype=complex))
    return StateVector(branch.sector, V @ (np.exp(-1j * lam * dt) * (V.conj().T @ branch.amplitudes)))


# ---------------------------------------------------------------------------
# sampling


def _weights_of(decomp) -> np.ndarray:
    w = decomp.weights if isinstance(decomp, BranchDecomposition) else np.asarray(decomp, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0):
        raise DomainError("weights must be a nonempty nonnegative vector")
    total = w.sum()
    if abs(total - 1) > 1e-6:
        warnings.warn(f"branch weights sum to {total:.9g}; renormalizing", RuntimeWarning, stacklevel=3)
    return w / total


def sample_branch(decomp, seed=None) -> int:
    """Index ``i`` drawn with probability ``w_i``."""
    w = _weights_of(decomp)
    return int(np.random.default_rng(seed).choice(w.size, p=w))


def sample_branches(decomp, size: int, seed=None) -> np.ndarray:
    w = _weights_of(decomp)
    return np.random.default_rng(seed).choice(w.size, size=size, p=w)
