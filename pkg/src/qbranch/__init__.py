"""Complexity-driven branch decomposition on lattice fermions."""

__version__ = "0.1.0"

from .errors import (
    AuditToleranceError,
    CapExceededError,
    ConvergenceError,
    DegenerateInputError,
    DomainError,
    InconsistencyError,
    QBranchError,
)
from .fock import LatticeGeometry, SectorBasis, StateVector, build_product_state, enumerate_sector
from .opspace import ControlField, basis_F, basis_G, lie_closure
