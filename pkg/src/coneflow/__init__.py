"""coneflow: certification and geometry for cone-monotone conservative systems.

The package certifies (by sampling) that a dynamical system is monotone
with respect to a polyhedral cone and conserves a cone-increasing scalar,
then builds the objects that make convergence observable: the equilibrium
branch over level values, a scalar that increases strictly along orbits,
and the plane-sandwich geometry that certifies level-set slices are
star-shaped.
"""

from .cones import (Membership, OrderRel, PolyCone, classify, contains_cone,
                    dual_classify, from_facets, interior_direction, order, orthant)
from .certify import CertReport, certify_all, check_cooperative, check_irreducible
from .equilibria import (EquilibriumCurve, assert_no_boundary_equilibria,
                         continue_curve, sample_on_levelset, solve_on_levelset)
from .errors import (AlphaCapExceeded, ConeflowError, CurveTooShort,
                     DegenerateSystem, Diverged, ExprSyntaxError, LeftDomain,
                     NoConvergence, NoIntersection, NonMonotoneH, NotPointed,
                     NotSolid, NumericError, StepSizeUnderflow, TrapFailed,
                     UnknownIdentifier)
from .exprlang import Expr, compile_expr, diff, evaluate, parse, to_str
from .geometry import (Region, SliceSpec, TrapContext, build_trap,
                       levelset_slice_sample, lower_set_region, make_slice,
                       project_central, ray_exit, upper_set_region)
from .integrate import (IntegrateOptions, OrderTrialReport, Trajectory,
                        integrate, order_preservation_trial)
from .lyapunov import (LyapunovEvaluator, OrbitIncreaseReport,
                       check_increase_along_orbit, eval_L, eval_Q)
from .numerics import DEFAULT_TOL, Tol, feas_lp, lstsq, rank
from .system import (SampleReport, SystemSpec, builtin_chem, check_grad_dual,
                     check_integral, load_system, make_system)

__version__ = "0.1.0"
