"""Quantized-field high-harmonic generation: exact sector dynamics and the parametric model."""

from .fock_basis import ModeSet, SectorBasis, enumerate_sector, sector_weights
from .hamiltonian import (
    CouplingSet,
    experimental_couplings,
    explicit_couplings,
    interaction_matrix,
    plateau_couplings,
)
from .observables import (
    mandel_q,
    photon_distribution,
    purity,
    quadratures,
    reduced_density,
    wigner,
    wigner_grid,
)
from .propagator import PropagatorConfig, QuantumState, evolve_full, evolve_sector

__version__ = "0.1.0"
