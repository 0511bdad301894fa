"""Numerical upper estimates of complexity by piecewise-constant control optimization.

A trajectory with ``S`` equal steps is encoded by the time-integrated
coefficient vectors ``theta_j`` of its controls in the orthonormal basis of
K, so ``U = prod_j exp(-i H(theta_j))`` and ``cost = sum_j ||theta_j||``.
The constraint ``|<target|U|start>| = 1`` is imposed by a penalty whose
weight follows an increasing schedule, followed by a fidelity-only
refinement.  Gradients of the propagators use the exact divided-difference
formula for derivatives of matrix exponentials.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sopt

from ..errors import CapExceededError, ConvergenceError, DomainError, InconsistencyError
from ..fock import StateVector, spin_flip
from ..opspace import embedded_basis, spin_flip_field
from .schmidt import endpoint_angles, product_angle, rate_constant
from .trajectory import ControlTrajectory, cost

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    steps: int | None = None          # default 4 * (L - 1)
    restarts: int = 8
    seed: int = 0
    mu_schedule: tuple = (10.0, 1e2, 1e3, 1e4)
    eps: float = 1e-6                 # smoothing of ||theta|| at 0
    maxiter: int = 300
    refine_maxiter: int = 2000
    fidelity_tol: float = 1e-9        # on 1 - |overlap|
    init_scale: float = 0.1
    warm_starts: tuple = ()
    product_restarts: int = 6
    spin_symmetric: bool = True       # also solve the spin-flipped problem, keep the better
    cap: int = 2000                   # largest sector dimension handled


@dataclass
class ComplexityEstimate:
    """Bracket ``lower <= C <= upper``; ``witness`` steers ``start`` to the target."""

    lower: float
    upper: float
    witness: ControlTrajectory
    start: StateVector | None = None
    overlap: float = 1.0
    methods: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lower > self.upper + 1e-9:
            raise InconsistencyError(
                f"lower bound {self.lower:.12g} exceeds upper estimate {self.upper:.12g}"
            )


class _Propagator:
    """Forward/backward sweeps and exact gradients for angle-vector trajectories."""

    def __init__(self, sector):
        E = embedded_basis(sector)
        self.E = E
        self.E_flat = E.reshape(E.shape[0], -1)
        self.P = E.shape[0]
        self.d = sector.dim

    def _eig(self, theta):
        H = (theta @ self.E_flat).reshape(-1, self.d, self.d)
        return np.linalg.eigh(H)

    def unitary_apply(self, theta, vec):
        if theta.shape[0] == 0:
            return vec
        lam, V = self._eig(theta)
        for j in range(theta.shape[0]):
            vec = V[j] @ (np.exp(-1j * lam[j]) * (V[j].conj().T @ vec))
        return vec

    def overlap_and_grad(self, theta, start, target):
        """``o = <target|U|start>``, ``do/dtheta`` and the back-propagated target ``U^+ target``."""
        S = theta.shape[0]
        if S == 0:
            return np.vdot(target, start), np.zeros((0, self.P), dtype=complex), target
        lam, V = self._eig(theta)
        ph = np.exp(-1j * lam)
        fwd = [start]
        for j in range(S):
            fwd.append(V[j] @ (ph[j] * (V[j].conj().T @ fwd[-1])))
        o = np.vdot(target, fwd[-1])
        W = np.empty((S, self.d, self.d), dtype=complex)
        chi = target
        for j in range(S - 1, -1, -1):
            Vj, pj, lj = V[j], ph[j], lam[j]
            x = Vj.conj().T @ chi
            y = Vj.conj().T @ fwd[j]
            diff = lj[:, None] - lj[None, :]
            close = np.abs(diff) < 1e-12
            gamma = np.where(close, -1j * pj[:, None],
                             (pj[:, None] - pj[None, :]) / np.where(close, 1.0, diff))
            M = x.conj()[:, None] * gamma * y[None, :]
            W[j] = Vj.conj() @ M @ Vj.T
            chi = Vj @ (pj.conj() * x)
        grad = W.reshape(S, -1) @ self.E_flat.T
        return o, grad, chi


def _smooth_cost(theta, eps):
    nrm = np.sqrt(np.sum(theta ** 2, axis=1) + eps ** 2)
    return float(nrm.sum()), theta / nrm[:, None]


def _lbfgs(fun, x0, maxiter):
    res = sopt.minimize(fun, x0, jac=True, method="L-BFGS-B",
                        options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-12})
    return res.x


@dataclass
class _Candidate:
    cost: float
    infidelity: float
    theta: np.ndarray
    start: np.ndarray
    origin: str


def _check_pair(target: StateVector, start: StateVector, cfg: OptimizerConfig):
    if target.geometry != start.geometry:
        raise DomainError("states live on different lattices")
    if target.n != start.n:
        raise DomainError("complexity is defined only between states of equal particle number")
    if target.sector.dim > cfg.cap:
        raise CapExceededError(
            f"sector dimension {target.sector.dim} exceeds cap {cfg.cap}",
            size=target.sector.dim, cap=cfg.cap,
        )
    for s in (target, start):
        if abs(s.norm() - 1) > 1e-9:
            raise DomainError("states must be normalized")


def _default_steps(geometry, cfg):
    return cfg.steps if cfg.steps is not None else 4 * max(geometry.n_sites - 1, 1)


def _trajectory_angles(traj: ControlTrajectory, S: int, P: int) -> np.ndarray:
    th = traj.angle_vectors() if len(traj) else np.zeros((0, P))
    if th.shape[0] < S:
        th = np.vstack([th, np.zeros((S - th.shape[0], P))])
    return th


def _optimize_fixed_start(prop, start, target, theta0, cfg):
    """Penalty continuation then fidelity refinement from ``theta0``."""
    shape = theta0.shape
    x = theta0.ravel().copy()

    def penalty(xv, mu):
        th = xv.reshape(shape)
        o, g, _ = prop.overlap_and_grad(th, start, target)
        F = abs(o) ** 2
        c, dc = _smooth_cost(th, cfg.eps)
        dF = 2 * np.real(np.conj(o) * g)
        return c + mu * (1 - F), (dc - mu * dF).ravel()

    def infid(xv):
        th = xv.reshape(shape)
        o, g, _ = prop.overlap_and_grad(th, start, target)
        return 1 - abs(o) ** 2, (-2 * np.real(np.conj(o) * g)).ravel()

    for mu in cfg.mu_schedule:
        x = _lbfgs(lambda v: penalty(v, mu), x, cfg.maxiter)
    x = _lbfgs(infid, x, cfg.refine_maxiter)
    th = x.reshape(shape)
    o = prop.overlap_and_grad(th, start, target)[0]
    return th, 1 - abs(o)


def _angle_cost(theta):
    return float(np.linalg.norm(theta, axis=1).sum())


def endpoint_lower_bound(start: StateVector, target: StateVector) -> float:
    """Rotation-angle lower bound on the cost of any trajectory from ``start`` to ``target``."""
    if start.geometry.n_sites < 2:
        return 0.0
    return float(endpoint_angles(start, target).sum() / rate_constant(start.n))


def optimize_complexity(target: StateVector, start: StateVector,
                        config: OptimizerConfig | None = None) -> ComplexityEstimate:
    """Cheapest trajectory found from ``start`` to ``target`` (up to phase).

    ``config.warm_starts`` may hold trajectories used as additional initial
    guesses; a feasible warm start is itself a candidate.  Raises
    :class:`ConvergenceError` (with the best infeasible candidate) when no
    restart reaches the target.
    """
    cfg = config or OptimizerConfig()
    _check_pair(target, start, cfg)
    geom = target.geometry
    lower = endpoint_lower_bound(start, target)
    methods = {"lower": "endpoint-spectrum", "upper": "optimized"}
    ov0 = abs(target.vdot(start))
    if 1 - ov0 <= cfg.fidelity_tol:
        return ComplexityEstimate(0.0, 0.0, ControlTrajectory(()), start, ov0,
                                  {"lower": "trivial", "upper": "identity"})
    prop = _Propagator(target.sector)
    S = _default_steps(geom, cfg)
    rng = np.random.default_rng(cfg.seed)
    s_amp, t_amp = start.amplitudes, target.amplitudes
    cands = []
    inits = []
    for w in cfg.warm_starts:
        th = _trajectory_angles(w, S, prop.P)
        o = np.vdot(t_amp, prop.unitary_apply(th, s_amp))
        cands.append(_Candidate(_angle_cost(th), 1 - abs(o), th, s_amp, "warm"))
        inits.append(("warm-opt", th))
    for _ in range(cfg.restarts):
        inits.append(("random", rng.normal(scale=cfg.init_scale, size=(S, prop.P))))
    for origin, th0 in inits:
        th, inf = _optimize_fixed_start(prop, s_amp, t_amp, th0, cfg)
        cands.append(_Candidate(_angle_cost(th), inf, th, s_amp, origin))
        log.debug("restart %s: cost %.6f infidelity %.2e", origin, cands[-1].cost, inf)
    return _select(cands, cfg, geom, start.sector, lower, methods)


def _select(cands, cfg, geom, sector, lower, methods):
    feasible = [c for c in cands if c.infidelity <= cfg.fidelity_tol]
    if not feasible:
        best = min(cands, key=lambda c: c.infidelity)
        raise ConvergenceError(
            f"no restart reached the target (best infidelity {best.infidelity:.2e})",
            best=ComplexityEstimate(lower, max(lower, best.cost),
                                    ControlTrajectory.from_angles(geom, best.theta),
                                    StateVector(sector, best.start), 1 - best.infidelity,
                                    dict(methods, status="infeasible")),
        )
    best = min(feasible, key=lambda c: c.cost)
    witness = ControlTrajectory.from_angles(geom, best.theta)
    methods = dict(methods, origin=best.origin)
    start = StateVector(sector, best.start / np.linalg.norm(best.start))
    return ComplexityEstimate(lower, cost(witness), witness, start, 1 - best.infidelity, methods)


# ---------------------------------------------------------------------------
# distance to the product states


def _mode_table(sector):
    return np.nonzero(sector.modes)[1].reshape(sector.dim, sector.n)


def product_amplitudes(sector, orbitals) -> np.ndarray:
    """Amplitudes of ``c+(o_{n-1}) ... c+(o_0)|vac>`` for mode orbitals ``o_j`` (rows)."""
    orbitals = np.asarray(orbitals, dtype=complex)
    n = sector.n
    if orbitals.shape != (n, sector.geometry.n_modes):
        raise DomainError("need one orbital of length 2L per particle")
    if n == 0:
        return np.ones(1, dtype=complex)
    A = orbitals.T[_mode_table(sector)]  # (d, n_modes_chosen, n_particles)
    return np.linalg.det(A)


class _ProductFamily:
    """Real parametrization of product states ``prod_j c+(p_j, s_j)``."""

    def __init__(self, sector):
        self.sector = sector
        self.n = sector.n
        self.L = sector.geometry.n_sites
        self.per = 2 * (self.L + 2)
        self.size = self.n * self.per

    def orbitals(self, x):
        x = x.reshape(self.n, self.per)
        half = self.per // 2
        c = x[:, :half] + 1j * x[:, half:]
        p, s = c[:, : self.L], c[:, self.L:]
        return (p[:, :, None] * s[:, None, :]).reshape(self.n, -1)

    def packets(self, x):
        x = x.reshape(self.n, self.per)
        half = self.per // 2
        c = x[:, :half] + 1j * x[:, half:]
        out = []
        for row in c:
            p, s = row[: self.L], row[self.L:]
            out.append((p / np.linalg.norm(p), s / np.linalg.norm(s)))
        return out

    def amplitudes(self, x):
        return product_amplitudes(self.sector, self.orbitals(x))

    def jacobian(self, x):
        # amplitudes are linear in each real parameter: central differences are exact
        J = np.empty((self.size, self.sector.dim), dtype=complex)
        for i in range(self.size):
            xp, xm = x.copy(), x.copy()
            xp[i] += 0.5
            xm[i] -= 0.5
            J[i] = self.amplitudes(xp) - self.amplitudes(xm)
        return J

    def random(self, rng):
        return rng.normal(size=self.size)


def _fidelity_and_grad(phi, J, u):
    """``F = |<u|phi>|^2 / <phi|phi>`` and its gradient through ``J = dphi/dx``."""
    N = np.vdot(phi, phi).real
    o = np.vdot(u, phi)
    F = abs(o) ** 2 / N
    do = J @ u.conj()
    dN = 2 * np.real(J.conj() @ phi)
    dF = (2 * np.real(np.conj(o) * do) * N - abs(o) ** 2 * dN) / N ** 2
    return F, dF


def best_product_fit(psi: StateVector, restarts: int = 6, seed: int = 0):
    """Product state of maximal fidelity with ``psi``: ``(fidelity, params, family)``."""
    fam = _ProductFamily(psi.sector)
    rng = np.random.default_rng(seed)
    u = psi.amplitudes
    best = (-1.0, None)

    def neg(x):
        phi = fam.amplitudes(x)
        if np.vdot(phi, phi).real < 1e-24:
            return 1.0, np.zeros_like(x)
        F, dF = _fidelity_and_grad(phi, fam.jacobian(x), u)
        return -F, -dF

    seeds = [fam.random(rng) for _ in range(max(restarts, 1))]
    # deterministic guess from the most probable basis state
    top = int(np.argmax(np.abs(u)))
    guess = np.zeros(fam.size)
    modes = _mode_table(psi.sector)[top]
    half = fam.per // 2
    for j, m in enumerate(modes):
        site, spin = divmod(int(m), 2)
        row = guess[j * fam.per:(j + 1) * fam.per]
        row[site] = 1.0
        row[fam.L + spin] = 1.0
    seeds.insert(0, guess + 1e-3 * rng.normal(size=fam.size))
    for x0 in seeds:
        x = _lbfgs(neg, x0, 500)
        F = -neg(x)[0]
        if F > best[0]:
            best = (F, x)
    return best[0], best[1], fam


def pair_product_test(psi: StateVector, tol: float = 1e-10) -> tuple:
    """``(fidelity, is_product)`` for a two-particle state.

    ``fidelity`` is the largest overlap with any two-fermion determinant,
    read off the antisymmetric coefficient matrix.  The state is a product
    state when it is a determinant whose two-orbital span contains two
    independent orbitals of the form ``p(x) s(i)``.
    """
    if psi.n != 2:
        raise DomainError("pair test needs exactly two particles")
    M = psi.geometry.n_modes
    modes = _mode_table(psi.sector)
    A = np.zeros((M, M), dtype=complex)
    A[modes[:, 0], modes[:, 1]] = psi.amplitudes
    A -= A.T
    U, sv, _ = np.linalg.svd(A)
    norm2 = (sv ** 2).sum() / 2
    fid = sv[0] ** 2 / norm2 if norm2 > 0 else 0.0
    if fid < 1 - 1e-12:
        return float(fid), False
    # 2x2 minors of alpha*a + beta*b, as quadratic forms in (alpha, beta)
    a = U[:, 0].reshape(-1, 2)
    b = U[:, 1].reshape(-1, 2)
    minor = lambda u, v: np.outer(u[:, 0], v[:, 1]) - np.outer(u[:, 1], v[:, 0])
    C = np.stack([minor(a, a).ravel(), (minor(a, b) + minor(b, a)).ravel(), minor(b, b).ravel()], axis=1)
    cs, cv = np.linalg.svd(C, full_matrices=False)[1:]
    rank = int(np.sum(cs > tol))
    if rank == 0:
        return float(fid), True
    if rank > 1:
        return float(fid), False
    c0, c1, c2 = cv[0]
    # one quadratic: product iff it has two distinct projective roots
    return float(fid), bool(abs(c1 * c1 - 4 * c0 * c2) > tol)


def product_surrogate(psi: StateVector) -> float:
    """Cut-angle lower estimate of the distance from ``psi`` to the product states.

    Two-particle states only: sums, over cuts, the angle from the spectrum
    to the nearest spectrum with one Schmidt value per particle-number block,
    divided by the rate constant.  Certified product states get 0, as do
    other particle numbers.
    """
    if psi.product or psi.n != 2 or psi.geometry.n_sites < 2:
        return 0.0
    if pair_product_test(psi)[1]:
        return 0.0
    L = psi.geometry.n_sites
    return float(sum(product_angle(psi, p) for p in range(L - 1)) / rate_constant(psi.n))


def complexity_of_state(psi: StateVector, config: OptimizerConfig | None = None) -> ComplexityEstimate:
    """Estimate of the distance from ``psi`` to the nearest product state.

    Product-certified inputs (and inputs fitted by a product state to
    fidelity ``1 - 1e-12``) return 0.  Otherwise the product state and the
    trajectory are optimized jointly.  ``config.warm_starts`` may hold
    ``(packets, trajectory)`` pairs, ``packets`` as accepted by
    :func:`qbranch.fock.build_product_state`.

    With ``spin_symmetric`` the spin-flipped problem is solved as well and
    the better of the two answers kept, so the estimate is exactly invariant
    under the global relabelling of spins.
    """
    cfg = config or OptimizerConfig()
    if not cfg.spin_symmetric or psi.product:
        return _complexity_of_state(psi, cfg)
    results, errors = [], []
    for flipped in (False, True):
        try:
            est = _complexity_of_state(spin_flip(psi) if flipped else psi, cfg)
        except ConvergenceError as exc:
            errors.append(exc)
            continue
        if flipped:
            est = _mirror(est)
        results.append(est)
        if est.upper == 0.0:
            break
    if not results:
        raise errors[0]
    best = min(results, key=lambda e: e.upper)
    lower = max(e.lower for e in results)
    if lower > best.upper + 1e-9:
        raise InconsistencyError(f"lower bound {lower:.12g} exceeds upper estimate {best.upper:.12g}")
    best.lower = min(lower, best.upper)
    return best


def _mirror(est: ComplexityEstimate) -> ComplexityEstimate:
    witness = ControlTrajectory(tuple((dt, spin_flip_field(k)) for dt, k in est.witness.steps))
    start = spin_flip(est.start)
    return ComplexityEstimate(est.lower, est.upper, witness,
                              StateVector(start.sector, start.amplitudes, product=True),
                              est.overlap, dict(est.methods, mirrored=True))


def _complexity_of_state(psi: StateVector, cfg: OptimizerConfig) -> ComplexityEstimate:
    if abs(psi.norm() - 1) > 1e-9:
        raise DomainError("state must be normalized")
    if psi.sector.dim > cfg.cap:
        raise CapExceededError(f"sector dimension {psi.sector.dim} exceeds cap {cfg.cap}",
                               size=psi.sector.dim, cap=cfg.cap)
    if psi.product:
        return ComplexityEstimate(0.0, 0.0, ControlTrajectory(()), psi, 1.0,
                                  {"lower": "product", "upper": "product"})
    F0, x_fit, fam = best_product_fit(psi, cfg.product_restarts, cfg.seed)
    if F0 >= 1 - 1e-12:
        phi = fam.amplitudes(x_fit)
        start = StateVector(psi.sector, phi / np.linalg.norm(phi), product=True)
        return ComplexityEstimate(0.0, 0.0, ControlTrajectory(()), start, float(np.sqrt(F0)),
                                  {"lower": "product", "upper": "product-fit"})
    lower = product_surrogate(psi)
    methods = {"lower": "product-surrogate" if psi.n == 2 else "trivial", "upper": "optimized"}
    geom = psi.geometry
    prop = _Propagator(psi.sector)
    S = _default_steps(geom, cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    target = psi.amplitudes
    inits = []
    cands = []
    for packets, traj in cfg.warm_starts:
        x0 = _packets_to_params(fam, packets)
        th = _trajectory_angles(traj, S, prop.P)
        phi = fam.amplitudes(x0)
        phi = phi / np.linalg.norm(phi)
        o = np.vdot(target, prop.unitary_apply(th, phi))
        cands.append(_Candidate(_angle_cost(th), 1 - abs(o), th, phi, "warm"))
        inits.append(("warm-opt", x0, th))
    inits.append(("product-fit", x_fit, np.zeros((S, prop.P))))
    for _ in range(cfg.restarts):
        inits.append(("random", x_fit + 0.05 * rng.normal(size=fam.size),
                      rng.normal(scale=cfg.init_scale, size=(S, prop.P))))
    for origin, x0, th0 in inits:
        x, th, inf = _optimize_joint(prop, fam, target, x0, th0, cfg)
        phi = fam.amplitudes(x)
        cands.append(_Candidate(_angle_cost(th), inf, th, phi / np.linalg.norm(phi), origin))
    est = _select(cands, cfg, geom, psi.sector, lower, methods)
    est.start = StateVector(psi.sector, est.start.amplitudes, product=True)
    return est


def _packets_to_params(fam, packets):
    x = np.zeros(fam.size)
    half = fam.per // 2
    for j, (p, s) in enumerate(packets):
        c = np.concatenate([np.asarray(p, dtype=complex), np.asarray(s, dtype=complex)])
        x[j * fam.per:j * fam.per + half] = c.real
        x[j * fam.per + half:(j + 1) * fam.per] = c.imag
    return x


def _optimize_joint(prop, fam, target, x0, th0, cfg):
    S, P = th0.shape
    nx = fam.size

    def split(v):
        return v[:nx], v[nx:].reshape(S, P)

    def parts(v):
        x, th = split(v)
        phi = fam.amplitudes(x)
        N = np.vdot(phi, phi).real
        o, g, u = prop.overlap_and_grad(th, phi, target)
        # o = <target|U|phi> ; conj(o) = <phi|U^+ target> = <phi|u>
        F, dFx = _fidelity_and_grad(phi, fam.jacobian(x), u)
        dFth = 2 * np.real(np.conj(o) * g) / N
        return th, F, dFx, dFth

    def penalty(v, mu):
        th, F, dFx, dFth = parts(v)
        c, dc = _smooth_cost(th, cfg.eps)
        return c + mu * (1 - F), np.concatenate([-mu * dFx, (dc - mu * dFth).ravel()])

    def infid(v):
        th, F, dFx, dFth = parts(v)
        return 1 - F, -np.concatenate([dFx, dFth.ravel()])

    v = np.concatenate([x0, th0.ravel()])
    for mu in cfg.mu_schedule:
        v = _lbfgs(lambda w: penalty(w, mu), v, cfg.maxiter)
    v = _lbfgs(infid, v, cfg.refine_maxiter)
    x, th = split(v)
    F = parts(v)[1]
    return x, th, 1 - np.sqrt(max(F, 0.0))
