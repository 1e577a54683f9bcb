"""
Adaptive main mesh, its face-based dual meshes, and the fields living on them.
"""

from .amr import (
    ACTIVE,
    VIRTUAL_CHILD,
    VIRTUAL_PARENT,
    AmrMesh,
    FaceNeighbor,
    LevelTransfer,
    RemeshReport,
    adapt,
    build_uniform,
)
from .estimator import chi_estimator, chi_values, indicator_field
from .fields import DofField, cell_means
from .staggered import (
    DualElement,
    DualMesh,
    SigmaConfig,
    build_dual,
    build_duals,
    classify_sigma,
    dual_faces_within,
    sigma_catalog,
)

__all__ = [
    "ACTIVE",
    "VIRTUAL_CHILD",
    "VIRTUAL_PARENT",
    "AmrMesh",
    "DofField",
    "DualElement",
    "DualMesh",
    "FaceNeighbor",
    "LevelTransfer",
    "RemeshReport",
    "SigmaConfig",
    "adapt",
    "build_dual",
    "build_duals",
    "build_uniform",
    "cell_means",
    "chi_estimator",
    "chi_values",
    "classify_sigma",
    "dual_faces_within",
    "indicator_field",
    "sigma_catalog",
]
