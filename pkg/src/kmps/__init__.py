"""Momentum-space MPS engine for truncated (1+1)d boson field theories."""

__version__ = "0.1.0"

from .graded import (BlockTensor, GradedSpace, TruncationPolicy, adjoint,
                     contract, fuse, svd_truncate)
from .layout import ModeLayout, ModelKind, occupation_profile
from .hamiltonian import (MpoOperator, SchwingerParams, SineGordonParams,
                          assemble_hamiltonian, dispersion, first_breather_mass,
                          free_mpo, kappa, vertex_mpo)
from .deltamps import DeltaMps, build_delta_mps, capacity, delta_amplitude

__all__ = [
    "BlockTensor", "GradedSpace", "TruncationPolicy", "adjoint", "contract",
    "fuse", "svd_truncate", "ModeLayout", "ModelKind", "occupation_profile",
    "MpoOperator", "SchwingerParams", "SineGordonParams", "assemble_hamiltonian",
    "dispersion", "first_breather_mass", "free_mpo", "kappa", "vertex_mpo",
    "DeltaMps", "build_delta_mps", "capacity", "delta_amplitude",
]
