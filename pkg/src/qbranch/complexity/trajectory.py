"""Piecewise-constant control trajectories, their evolution and their cost."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..fock import StateVector
from ..opspace import ControlField, embed

DURATION_TOL = 1e-9


def _expm_herm(H: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i t H)`` for Hermitian ``H``."""
    lam, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * t * lam)) @ V.conj().T


@dataclass(frozen=True, eq=False)
class ControlTrajectory:
    """Ordered steps ``(dt, k)``: hold control ``k`` for time ``dt``.

    Total duration is 1 (an empty trajectory is the identity).  Use
    :meth:`from_steps` with ``normalize=True`` to rescale an arbitrary
    schedule without changing its endpoint or cost.
    """

    steps: tuple

    def __post_init__(self):
        steps = tuple((float(dt), k) for dt, k in self.steps)
        for dt, k in steps:
            if not dt > 0:
                raise DomainError("step durations must be positive")
            if not isinstance(k, ControlField):
                raise DomainError("steps must hold ControlField instances")
        if steps:
            if len({k.geometry for _, k in steps}) > 1:
                raise DomainError("all controls must live on the same lattice")
            total = sum(dt for dt, _ in steps)
            if abs(total - 1.0) > DURATION_TOL:
                raise DomainError(f"durations sum to {total}, expected 1")
        object.__setattr__(self, "steps", steps)

    @classmethod
    def from_steps(cls, steps, normalize: bool = True) -> "ControlTrajectory":
        steps = [(float(dt), k) for dt, k in steps]
        if normalize and steps:
            T = sum(dt for dt, _ in steps)
            if not T > 0:
                raise DomainError("total duration must be positive")
            steps = [(dt / T, k * T) for dt, k in steps]
        return cls(tuple(steps))

    @classmethod
    def from_angles(cls, geometry, angle_vectors) -> "ControlTrajectory":
        """Equal-duration steps whose time-integrated coefficient vectors are ``angle_vectors``."""
        angle_vectors = np.atleast_2d(np.asarray(angle_vectors, dtype=float))
        S = angle_vectors.shape[0]
        if S == 0:
            return cls(())
        return cls(tuple((1.0 / S, ControlField.from_coefficients(geometry, S * th))
                         for th in angle_vectors))

    @property
    def geometry(self):
        return self.steps[0][1].geometry if self.steps else None

    def __len__(self):
        return len(self.steps)

    def __add__(self, other: "ControlTrajectory") -> "ControlTrajectory":
        """Concatenation (first ``self``, then ``other``), renormalized to unit duration."""
        if not self.steps:
            return other
        if not other.steps:
            return self
        return ControlTrajectory.from_steps(list(self.steps) + list(other.steps))

    def reparametrize(self, factors) -> "ControlTrajectory":
        """Stretch step ``j`` by ``factors[j]`` (slowing its control accordingly)."""
        factors = np.asarray(factors, dtype=float)
        if factors.shape != (len(self),) or np.any(factors <= 0):
            raise DomainError("need one positive factor per step")
        return ControlTrajectory.from_steps(
            [(dt * c, k * (1.0 / c)) for (dt, k), c in zip(self.steps, factors)]
        )

    def angle_vectors(self) -> np.ndarray:
        """Time-integrated coefficient vector ``dt * coeffs(k)`` of every step."""
        return np.array([dt * k.coefficients() for dt, k in self.steps])


def step_unitaries(traj: ControlTrajectory, sector) -> list:
    return [_expm_herm(embed(k, sector), dt) for dt, k in traj.steps]


def evolve(traj: ControlTrajectory, psi0: StateVector) -> StateVector:
    """Apply ``exp(-i dt embed(k))`` for every step in order."""
    if abs(psi0.norm() - 1) > 1e-9:
        raise DomainError("initial state must be normalized")
    if traj.steps and traj.geometry != psi0.geometry:
        raise DomainError("trajectory and state live on different lattices")
    amps = psi0.amplitudes
    for U in step_unitaries(traj, psi0.sector):
        amps = U @ amps
    amps = amps / np.linalg.norm(amps)
    return StateVector(psi0.sector, amps)


def cost(traj: ControlTrajectory) -> float:
    """``sum dt * ||k||``."""
    return float(sum(dt * k.norm() for dt, k in traj.steps))


def overlap(a: StateVector, b: StateVector) -> float:
    """``|<a|b>|`` (phase-insensitive)."""
    return abs(a.vdot(b))
