"""Entangled pair states, their analytic complexity bounds, and constructive trajectories.

Sites are numbered ``0 .. L-1``.  The entangled pair at distance ``n`` is

    omega = (|-1>_0 |-1>_n + |1>_0 |1>_n) / sqrt(2)

and its extended variant spreads the second particle uniformly over the
``r`` sites ``n .. n+r-1``.  The constructive trajectories start from the
product state ``|1>_0 |1>_1``.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate

from ..errors import DomainError
from ..fock import LatticeGeometry, StateVector, basis_state
from ..opspace import ControlField
from .trajectory import ControlTrajectory

SQRT2 = np.sqrt(2.0)

# two-site tensor labels, index 4 * local_x + local_y with local 0:|0>, 1:|1>, 2:|-1>, 3:|2>
_PAIR = {(0, 0): 0, (0, 1): 1, (0, -1): 2, (1, 0): 4, (1, 1): 5, (-1, 0): 8, (-1, -1): 10}


def _rotation_generator(pairs) -> np.ndarray:
    """``-i sum (|a><b| - |b><a|)`` over label pairs ``(a, b)``."""
    m = np.zeros((16, 16), dtype=complex)
    for a, b in pairs:
        m[_PAIR[a], _PAIR[b]] += -1j
        m[_PAIR[b], _PAIR[a]] += 1j
    return m


K0_MATRIX = _rotation_generator([((-1, -1), (1, 1))])
KI_MATRIX = _rotation_generator([((0, 1), (1, 0)), ((0, -1), (-1, 0))])


def _check_chain(geometry: LatticeGeometry, n_sites: int):
    if geometry.dims != 1:
        raise DomainError("entangled pair constructions live on a chain")
    if geometry.n_sites < n_sites:
        raise DomainError(f"lattice needs at least {n_sites} sites, has {geometry.n_sites}")


def entangler(geometry: LatticeGeometry) -> ControlField:
    """``k_0``: rotates ``|1>_0|1>_1`` towards ``|-1>_0|-1>_1``; norm sqrt(2)."""
    _check_chain(geometry, 2)
    return ControlField(geometry, g_terms={(0, 1): K0_MATRIX})


def hop(geometry: LatticeGeometry, i: int) -> ControlField:
    """``k_i``: moves a particle of either spin from site ``i`` to ``i+1``; norm 2."""
    _check_chain(geometry, i + 2)
    return ControlField(geometry, g_terms={(i, i + 1): KI_MATRIX})


def psi_upper_bound(geometry: LatticeGeometry) -> StateVector:
    """Product state ``|1>_0 |1>_1``."""
    _check_chain(geometry, 2)
    return basis_state(geometry, {0: 1, 1: 1})


def omega(geometry: LatticeGeometry, n: int) -> StateVector:
    if n < 1:
        raise DomainError("distance must be >= 1")
    _check_chain(geometry, n + 1)
    a = basis_state(geometry, {0: -1, n: -1})
    b = basis_state(geometry, {0: 1, n: 1})
    return (a + b) * (1 / SQRT2)


def omega_branches(geometry: LatticeGeometry, n: int) -> tuple:
    """The two unnormalized halves of :func:`omega`."""
    a = basis_state(geometry, {0: -1, n: -1}) * (1 / SQRT2)
    b = basis_state(geometry, {0: 1, n: 1}) * (1 / SQRT2)
    return a, b


def omega_prime(geometry: LatticeGeometry, n: int, r: int) -> StateVector:
    if n < 1 or r < 1:
        raise DomainError("need n >= 1 and r >= 1")
    _check_chain(geometry, n + r)
    total = None
    for spin in (-1, 1):
        for x in range(n, n + r):
            v = basis_state(geometry, {0: spin, x: spin})
            total = v if total is None else total + v
    return total * (1 / np.sqrt(2 * r))


def kappa(r: int) -> float:
    """``(1/r) sum_{0<s<r} arcsin sqrt(s / 2r)``."""
    if r < 1:
        raise DomainError("r must be >= 1")
    s = np.arange(1, r)
    return float(np.arcsin(np.sqrt(s / (2.0 * r))).sum() / r)


def kappa_limit() -> float:
    val, _ = integrate.quad(lambda x: np.arcsin(np.sqrt(x / 2.0)), 0.0, 1.0, epsabs=1e-13)
    return float(val)


def lambda_(r: int) -> float:
    """``(1/r) sum_{0<s<r} arcsin sqrt(s / (s+1))``."""
    if r < 1:
        raise DomainError("r must be >= 1")
    s = np.arange(1, r)
    return float(np.arcsin(np.sqrt(s / (s + 1.0))).sum() / r)


LAMBDA_LIMIT = np.pi / 2


def lower_bound_point_pair(n: int) -> float:
    if n < 2:
        raise DomainError("distance must be >= 2")
    return n * np.pi / (8 * SQRT2)


def lower_bound_extended(n: int, r: int) -> float:
    if n < 2 or r < 2:
        raise DomainError("need n >= 2 and r >= 2")
    return lower_bound_point_pair(n) + r * kappa(r) / (2 * SQRT2)


def upper_bound_point_pair(n: int) -> float:
    """Cost of :func:`build_point_pair_trajectory`."""
    if n < 1:
        raise DomainError("distance must be >= 1")
    return (n - 1) * np.pi + np.pi / (2 * SQRT2)


def upper_bound_extended(n: int, r: int) -> float:
    """Cost of :func:`build_extended_trajectory`."""
    return upper_bound_point_pair(n) + 2 * lambda_(r) * r


def _rotation_steps(geometry, n):
    steps = [(np.pi / 4, entangler(geometry))]
    steps += [(np.pi / 2, hop(geometry, i)) for i in range(1, n)]
    return steps


def _as_trajectory(steps) -> ControlTrajectory:
    # exp(i theta k) is exp(-i dt K) with K = -theta k / dt
    return ControlTrajectory.from_steps([(1.0, k * (-theta)) for theta, k in steps])


def build_point_pair_trajectory(n: int, geometry: LatticeGeometry | None = None) -> ControlTrajectory:
    """Trajectory from :func:`psi_upper_bound` to :func:`omega` at distance ``n``."""
    if n < 1:
        raise DomainError("distance must be >= 1")
    geometry = geometry or LatticeGeometry.chain(n + 1)
    _check_chain(geometry, n + 1)
    return _as_trajectory(_rotation_steps(geometry, n))


def extension_angles(n: int, r: int) -> list:
    """``theta_i`` for ``i = n .. n+r-2`` with ``sin^2 theta_i = (n+r-i-1)/(n+r-i)``."""
    return [float(np.arcsin(np.sqrt((n + r - i - 1) / (n + r - i)))) for i in range(n, n + r - 1)]


def build_extended_trajectory(n: int, r: int, geometry: LatticeGeometry | None = None) -> ControlTrajectory:
    """Trajectory from :func:`psi_upper_bound` to :func:`omega_prime`."""
    if n < 1 or r < 1:
        raise DomainError("need n >= 1 and r >= 1")
    geometry = geometry or LatticeGeometry.chain(n + r)
    _check_chain(geometry, n + r)
    steps = _rotation_steps(geometry, n)
    steps += [(theta, hop(geometry, i)) for i, theta in zip(range(n, n + r - 1), extension_angles(n, r))]
    return _as_trajectory(steps)
