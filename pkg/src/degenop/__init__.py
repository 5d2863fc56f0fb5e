"""Degenerate elliptic operators on the half space: coefficient analysis,
transform calculus, generation criteria and graded-mesh solvers."""
from .operator_core import (IndicialData, OperatorParams, PolyGaussian, SpaceParams,
                            TestFunction, ValidationReport, apply_operator,
                            indicial_roots, validate)
from .transform_calculus import (KelvinStep, ShiftStep, TermSum, TransformPipeline,
                                 apply_transform, conjugate_by_shift_general,
                                 conjugate_by_shift_matched, reduce_to_canonical)
from .generation import (BoundaryCondition, DomainSpec, GenerationReport, RegimeFlag,
                         check_generation, domain_description, regime_flags)
from .weighted_spaces import (GradedMesh, GridFunction, boundary_trace,
                              sobolev_term_norms, weighted_lp_norm)
from .solver import (ModeOperator, ResolventProblem, parabolic_march, solve_mode,
                     solve_resolvent_1d, solve_resolvent_2d, solve_via_pipeline)

__version__ = "0.1.0"
