"""Discrete flat-torus geometry, line bundles and Dolbeault operators."""
from .geometry import GeometryMismatchError, TorusGeometry, dbar_terms, multi_indices
from .bundle import (
    LineBundle,
    constant_curvature_bundle,
    constant_curvature_links,
    gauge_transform_links,
    random_gauge,
    shift,
    trivial_bundle,
    trivial_links,
)
from .operators import (
    CurvatureOverflowError,
    DegreeError,
    cov_diff,
    cov_diff_adjoint,
    curvature,
    curvature_parts,
    d0,
    d0_adjoint,
    dbar,
    dbar_adjoint,
    dbar_symbol,
    degree_from_curvature,
    lambda_contract,
    laplacian,
    laplacian_eigenvalues,
    poisson_preconditioner,
    laplacian_symbol,
    omega,
    omega_wedge,
    plaquette_angles,
    two_form_from_pure,
    two_form_inner,
)
from .io import FieldFormatError, read_field, write_field

__all__ = [
    "GeometryMismatchError", "TorusGeometry", "dbar_terms", "multi_indices",
    "LineBundle", "constant_curvature_bundle", "constant_curvature_links",
    "gauge_transform_links", "random_gauge", "shift", "trivial_bundle", "trivial_links",
    "CurvatureOverflowError", "DegreeError", "cov_diff", "cov_diff_adjoint", "curvature",
    "curvature_parts", "d0", "d0_adjoint", "dbar", "dbar_adjoint", "dbar_symbol",
    "degree_from_curvature", "lambda_contract", "laplacian", "laplacian_eigenvalues",
    "laplacian_symbol", "poisson_preconditioner", "omega", "omega_wedge", "plaquette_angles", "two_form_from_pure", "two_form_inner",
    "FieldFormatError", "read_field", "write_field",
]
