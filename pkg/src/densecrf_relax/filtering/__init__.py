from .filter import Backend, GaussianFilter, TriangularSide, build_filter
from .lattice import PermutohedralLattice

__all__ = ["Backend", "GaussianFilter", "PermutohedralLattice", "TriangularSide", "build_filter"]
