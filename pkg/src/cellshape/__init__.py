"""Gradient-penalized shape optimization for 2D cellular composites."""
from .errors import (
    Breakdown,
    CellShapeError,
    ConfigurationError,
    ElementInversion,
    GeometryError,
    NonConvergence,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .mesh import (
    BoundaryTag,
    Mesh,
    MeshHierarchy,
    QualityReport,
    deform,
    generate_composite_domain,
    mesh_quality,
    refine_uniform,
)

__version__ = "0.1.0"
