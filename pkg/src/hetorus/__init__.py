"""Hermite-Einstein metrics and (omega, Omega)-stability on flat complex tori.

Spectral (FFT) discretisation of forms, the operator P, bundle curvature,
Einstein-factor analysis, slopes and a batch verification CLI.
"""
from .algebra import MatrixPQForm, PQForm, wedge
from .bundles import (BundleSpec, chern_curvature, direct_sum, extension, line_bundle,
                      subquotient_curvatures, transform_curvature, trivial_bundle)
from .fields import ScalarField, TorusGrid
from .geometry import GeometryContext, generate_test_form, make_context, validate_structures
from .he_analysis import einstein_matrix, he_rescale, slope_link_check, vanishing_identity_check
from .operator import POperatorContext, apply_P, decompose, solve_P
from .stability import degree, exact_sequence_check, kl_demo, semistability_verdict, slope

__version__ = "0.1.0"
