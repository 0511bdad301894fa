"""Free Gaussian wave packets in one or two continuum dimensions (hbar = 1).

A packet born at ``t = 0`` with position spread ``d``, momentum ``k`` and
initial centre ``z_in`` has, per axis, mean ``z_in + k t / m`` and variance
``d**2 + t**2 / (4 d**2 m**2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from ..errors import DomainError


@dataclass(frozen=True)
class GaussianPacket:
    k: tuple
    z_in: tuple
    d: float
    m: float

    def __post_init__(self):
        k = tuple(float(v) for v in np.atleast_1d(self.k))
        z = tuple(float(v) for v in np.atleast_1d(self.z_in))
        if len(k) != len(z) or len(k) not in (1, 2):
            raise DomainError("k and z_in must both have 1 or 2 components")
        if self.d <= 0 or self.m <= 0:
            raise DomainError("packet width d and mass m must be positive")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "z_in", z)

    @property
    def dims(self) -> int:
        return len(self.k)

    def mean(self, t: float) -> np.ndarray:
        return np.asarray(self.z_in) + np.asarray(self.k) * t / self.m

    def variance(self, t: float) -> float:
        """Per-axis position variance."""
        return t ** 2 / (4 * self.d ** 2 * self.m ** 2) + self.d ** 2

    def dispersion(self, t: float) -> float:
        return float(np.sqrt(self.variance(t)))

    def kicked(self, dk, t1: float) -> "GaussianPacket":
        """Packet after an instantaneous momentum kick ``dk`` at ``t1``.

        The kicked wave function is again a free packet born at ``t = 0``,
        with its initial centre shifted so the centre is continuous at ``t1``.
        """
        dk = np.asarray(dk, dtype=float)
        k = np.asarray(self.k) + dk
        z = np.asarray(self.z_in) - dk * t1 / self.m
        return GaussianPacket(tuple(k), tuple(z), self.d, self.m)

    def wavefunction(self, x, t: float, axis: int = 0) -> np.ndarray:
        """One-axis factor of the wave function at positions ``x``."""
        x = np.asarray(x, dtype=float)
        k, z0 = self.k[axis], self.z_in[axis]
        s = 1 + 1j * t / (2 * self.m * self.d ** 2)
        u = x - z0 - k * t / self.m
        amp = (2 * np.pi * self.d ** 2) ** -0.25 / np.sqrt(s)
        return amp * np.exp(-u ** 2 / (4 * self.d ** 2 * s) + 1j * k * (x - z0) - 1j * k ** 2 * t / (2 * self.m))

    def density(self, x, t: float, axis: int = 0) -> np.ndarray:
        return np.abs(self.wavefunction(x, t, axis)) ** 2


def quadrature_moments(packet: GaussianPacket, t: float, axis: int = 0) -> tuple:
    """Norm, mean and variance of ``|psi|^2`` along one axis by numerical quadrature."""
    c = packet.mean(t)[axis]
    w = 12 * packet.dispersion(t)
    opts = dict(epsabs=1e-13, epsrel=1e-13, limit=200)
    rho = lambda x: packet.density(x, t, axis)
    norm = integrate.quad(rho, c - w, c + w, **opts)[0]
    mean = integrate.quad(lambda x: x * rho(x), c - w, c + w, **opts)[0] / norm
    var = integrate.quad(lambda x: (x - mean) ** 2 * rho(x), c - w, c + w, **opts)[0] / norm
    return norm, mean, var
