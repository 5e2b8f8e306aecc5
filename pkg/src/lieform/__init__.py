"""Lie sphere geometry of Legendre surfaces: canonical coframes, invariants and deformations."""

from .coframe import Coframe, InvariantSet, extract_invariants
from .fields import Grid, OneForm, ScalarField

__version__ = "0.1.0"

__all__ = ["Coframe", "Grid", "InvariantSet", "OneForm", "ScalarField", "extract_invariants", "__version__"]
