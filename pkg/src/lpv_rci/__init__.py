"""Data-driven robust control invariant sets and gain-scheduled controllers for LPV systems."""
from .datamatrices import DataMatrices, InformativityReport, build, informativity, membership
from .polytope import PolytopeH, PolytopeV, enumerate_vertices, symmetric_band_vertices, volume
from .presets import Setup, bundled_config, load_setup
from .solvers import SolveResult, SolverOptions, solve, verify_solution
from .synthesis import SynthesisConfig, SynthesisResult, extract_gains, synthesize
from .trajectory import ConstraintSets, LpvPlant, Trajectory, simulate

__version__ = "0.1.0"

__all__ = [
    "ConstraintSets", "DataMatrices", "InformativityReport", "LpvPlant", "PolytopeH",
    "PolytopeV", "Setup", "SolveResult", "SolverOptions", "SynthesisConfig",
    "SynthesisResult", "Trajectory", "build", "bundled_config", "enumerate_vertices",
    "extract_gains", "informativity", "load_setup", "membership", "simulate", "solve",
    "symmetric_band_vertices", "synthesize", "verify_solution", "volume",
]
