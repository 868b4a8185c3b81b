"""Solvers for prescribed-curvature support functions.

The package decides solvability of, and numerically solves, Dirichlet
problems for the degenerate Monge-Ampere equation satisfied by the
rescaled support function of a noncompact convex hypersurface with
prescribed p-curvature data, then reconstructs the hypersurface through
the discrete Legendre transform.
"""

from .admissibility import (ProblemSpec, Verdict, check_conditions_ab,
                            check_growth_typeII, check_nonexistence, classify,
                            domain_integral, refuse_if_inadmissible)
from .barriers import (BarrierPair, completeness_supersolution,
                       dirichlet_supersolution, exponent_table,
                       subsolution_p_lt_1, typeI_barriers, typeII_barriers,
                       verify_barrier)
from .domains import Ball, Ellipse, PlanarDomain, SmoothConvex, Strip, mu
from .grids import GridFunction, grid_function_from, grid_over_domain
from .operator import DiscreteMAOperator
from .pipelines import (CompletenessReport, Reconstruction, Solution,
                        TruncatedCylinder, TypeIISolution, TypeIIISolution,
                        cone_comparison, involution_defect, reconstruct,
                        solve_problem, solve_type_II, solve_type_III,
                        verify_completeness)
from .profiles import InnerIntegral, rho_profile
from .radial import RadialProfile, radial_oracle
from .solver import (Constant, PLessOne, PowerP, comparison_check,
                     scaling_check, solve_dirichlet)
from .support import (AsymptoticCone, Conjugate, asymptotic_cone, conjugate,
                      legendre)
from .surfaces import Hypersurface, build_hypersurface, graph_p_curvature
from . import errors

__version__ = "0.1.0"

__all__ = [
    "ProblemSpec", "Verdict", "check_conditions_ab", "check_growth_typeII",
    "check_nonexistence", "classify", "domain_integral",
    "refuse_if_inadmissible",
    "BarrierPair", "completeness_supersolution", "dirichlet_supersolution",
    "exponent_table", "subsolution_p_lt_1", "typeI_barriers",
    "typeII_barriers", "verify_barrier",
    "Ball", "Ellipse", "PlanarDomain", "SmoothConvex", "Strip", "mu",
    "GridFunction", "grid_function_from", "grid_over_domain",
    "DiscreteMAOperator",
    "CompletenessReport", "Reconstruction", "Solution", "TruncatedCylinder",
    "TypeIISolution", "TypeIIISolution", "cone_comparison",
    "involution_defect", "reconstruct", "solve_problem", "solve_type_II",
    "solve_type_III", "verify_completeness",
    "InnerIntegral", "rho_profile",
    "RadialProfile", "radial_oracle",
    "Constant", "PLessOne", "PowerP", "comparison_check", "scaling_check",
    "solve_dirichlet",
    "AsymptoticCone", "Conjugate", "asymptotic_cone", "conjugate", "legendre",
    "Hypersurface", "build_hypersurface", "graph_p_curvature",
    "errors",
    "__version__",
]
