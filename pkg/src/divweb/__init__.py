"""Computable diagnostics for divergence-free webs in adapted coordinates."""

from .expr import (Expr, EvalDomainError, ParseError, UnknownVariableError,
                   ZeroVerdict, differentiate, evaluate, is_identically_zero,
                   parse_expr, simplify, substitute)
from .measure import (EqualSplitResult, FitError, LoopCurvatureFit,
                      ProductConditionReport, ReflectionResult,
                      ReflectionTaylorFit, RootFindError,
                      check_product_condition, equal_split, fit_loop_curvature,
                      holonomy_defect, loop, reflect, reflection_taylor_check,
                      region_volume, subdivision_volumes)
from .normalform import (AdmissibilityVerdict, BoundaryData, CanonicalFormReport,
                         DensityGrid, NormalizedChart, PlanarInvariants,
                         ReconstructionError, axes_including_zero,
                         canonical_form_report, check_tensor_admissible,
                         normalize_chart, planar_invariants,
                         reconstruct_density, roundtrip_error)
from .quadrature import QuadratureError, QuadratureSpec, integrate_1d, integrate_box
from .region import Region
from .relativity import (SlicingReport, SplitMetric, builtin_spacetime,
                         slicing_report, volume_density, web_from_metric)
from .web import (GeodesicPath, NotTrivialError, SymTensorField,
                  TrivialityVerdict, TrivializingMap, WebChart,
                  connection_form, curvature_form, integrate_geodesic,
                  is_locally_trivial, nonuniformity_tensor, refine_to_codim1,
                  ricci_offdiag, trivializing_map)

__version__ = "0.1.0"
