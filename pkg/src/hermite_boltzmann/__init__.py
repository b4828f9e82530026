"""Hermite spectral solver for the multi-species Boltzmann equation."""
from .basis import ExpansionCenter, IndexSet, index_set, n_coeffs, project_coefficients
from .collision import CollisionSetup, bgk_Q, collision_rhs, damping_rate, hybrid_Q, quadratic_Q
from .moments import MixtureState, SpectralDistribution, mixture_moments, species_moments
from .scenarios import ScenarioConfig, build_case, knudsen_matrix, krook_wu_reference, l2_errors
from .solver import GridField, SolverConfig, Wall, advance, integrate_homogeneous_rk4
from .tensor import CollisionTensor, KernelSpec, TensorCache, assemble_tensor, tensor_cache_load, tensor_cache_save

__version__ = "0.1.0"

__all__ = [
    "ExpansionCenter", "IndexSet", "index_set", "n_coeffs", "project_coefficients",
    "CollisionSetup", "bgk_Q", "collision_rhs", "damping_rate", "hybrid_Q", "quadratic_Q",
    "MixtureState", "SpectralDistribution", "mixture_moments", "species_moments",
    "ScenarioConfig", "build_case", "knudsen_matrix", "krook_wu_reference", "l2_errors",
    "GridField", "SolverConfig", "Wall", "advance", "integrate_homogeneous_rk4",
    "CollisionTensor", "KernelSpec", "TensorCache", "assemble_tensor", "tensor_cache_load", "tensor_cache_save",
]
