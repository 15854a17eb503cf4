"""Exact, desk-scale verification of spectral independence, entropy and
block factorization, and Glauber dynamics mixing bounds for spin systems."""

__version__ = "0.1.0"

from .errors import LabError
from .graph_core import Graph, build_graph, path_tree
from .spin_models import SpinSystem, TwoSpinParams, colorings, hardcore, ising, monomer_dimer
from .exact_dist import ExactDistribution, Pinning, condition, enumerate_gibbs, influence_matrix

__all__ = [
    "__version__",
    "LabError",
    "Graph",
    "build_graph",
    "path_tree",
    "SpinSystem",
    "TwoSpinParams",
    "colorings",
    "hardcore",
    "ising",
    "monomer_dimer",
    "ExactDistribution",
    "Pinning",
    "condition",
    "enumerate_gibbs",
    "influence_matrix",
]
