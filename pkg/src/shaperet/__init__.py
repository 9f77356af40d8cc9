"""Bag-of-visual-words 3D shape retrieval with ring-sampled local descriptors."""

__version__ = "0.1.0"

from .bow import Dictionary, DistanceMatrix, Signature, build_signature, distance_matrix, kmeans
from .descriptors import DescriptorField, DescriptorKind, ReductionModel, apply_reduction, fit_reduction
from .evaluation import Labeling, RetrievalStats, evaluate, parse_cla
from .mesh import TriMesh, VertexGeometry, bbox, estimate_geometry, load_off, parse_off

__all__ = [
    "Dictionary", "DistanceMatrix", "Signature", "build_signature", "distance_matrix", "kmeans",
    "DescriptorField", "DescriptorKind", "ReductionModel", "apply_reduction", "fit_reduction",
    "Labeling", "RetrievalStats", "evaluate", "parse_cla",
    "TriMesh", "VertexGeometry", "bbox", "estimate_geometry", "load_off", "parse_off",
]
