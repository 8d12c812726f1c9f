"""Fractal percolation laboratory.

Survival-conditioned random dyadic trees and their natural measures,
intersection masses of product measures with affine planes and algebraic
varieties, and empirical threshold sweeps for geometric configurations.
"""

from ._kernels import IMPL as kernel_impl
from .errors import (
    BudgetError,
    ConfigError,
    DegenerateInputError,
    FracPercError,
    SingularityError,
)
from .percolation import (
    DyadicCube,
    GaltonWatsonLaw,
    NaturalMeasure,
    PercolationTree,
    coupled_slice,
    extinction_probability,
    natural_measure,
    offspring_distribution,
    resample_level,
    sample_forest,
    sample_tree,
)
from .geometry import (
    AffinePlane,
    coordinate_plane,
    plane_cube_measure,
    plane_from_text,
    plane_to_text,
    principal_angle,
    transversality_check,
)
from .polynomials import (
    PolynomialMap,
    newton_refine,
    polynomial_from_text,
    polynomial_to_text,
    variety_box_count,
    variety_cube_measure,
    variety_tangent,
)
from .intersect import (
    MassSeries,
    MeasureCache,
    ProductMeasureSpec,
    dependency_graph,
    holder_modulus,
    intersection_mass,
    martingale_resample_check,
    second_moment_estimate,
)
from .patterns import (
    ConfigDescriptor,
    DetectionResult,
    box_dimension_estimate,
    configuration_plane,
    configuration_polynomial,
    detect_configuration,
    harris_check,
    pattern_parameter_dimension,
    percolation_dimension_test,
    realized_value_set,
    subset_stress_test,
    threshold_sweep,
    threshold_table,
)

__version__ = "0.1.0"
