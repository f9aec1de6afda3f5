"""Wavelet-compressed second-order Volterra fingerprints."""

from .basis import Atom, BasisMatrix, WaveletBasisSpec, build_basis
from .featio import FeatureSet, read_features, write_features
from .model import (
    DesignMatrix,
    Extractor,
    FeatureVector,
    RidgeSolver,
    assemble,
    design_matrix,
    extract,
    first_order_response,
    n_features,
    ridge_solve,
    second_order_columns,
    volterra_forward,
)
from .pca import PCAResult, pca_project, separability

__all__ = [
    "Atom", "BasisMatrix", "WaveletBasisSpec", "build_basis",
    "FeatureSet", "read_features", "write_features",
    "DesignMatrix", "Extractor", "FeatureVector", "RidgeSolver", "assemble", "design_matrix",
    "extract", "first_order_response", "n_features", "ridge_solve", "second_order_columns",
    "volterra_forward",
    "PCAResult", "pca_project", "separability",
]
