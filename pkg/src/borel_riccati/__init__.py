"""Canonical exact solutions of singularly perturbed Riccati equations
hbar f' = a f^2 + b f + c by exact formal recursion, WKB geometry,
Borel-plane successive approximations and Laplace resummation, with an
application to exact WKB solutions of Schrodinger equations.
"""

from .errors import BorelRiccatiError
from .field import (
    BranchContext,
    FieldElem,
    FieldTower,
    GaussianRational,
    Polynomial,
    RationalFunction,
)
from .formal import (
    FormalSolution,
    GevreyFit,
    RiccatiEquation,
    formal_borel_series,
    formal_discriminant,
    formal_solve,
    gevrey_fit,
    hypothesis_check,
    leading_order,
    residual_series,
)
from .geometry import (
    HalfStrip,
    LiouvilleFrame,
    RayTrace,
    liouville_map,
    probe_halfstrip,
    trace_ray,
    turning_points,
)
from .borel import (
    BorelGrid,
    StandardizedEquation,
    convolve,
    integral_op,
    standardize,
    successive_approx,
)
from .resum import (
    ExactSolutionSample,
    GevreyRemainderReport,
    LaplaceResult,
    PipelineSettings,
    Resummation,
    XiPolynomial,
    analytic_borel,
    assemble_exact,
    build_resummation,
    gevrey_remainders,
    ibp_identity_check,
    laplace,
    theta_sweep,
)
from .schrodinger import (
    SchrodingerProblem,
    WkbBasis,
    WkbSolution,
    check_wkb_hypotheses,
    exact_wkb_basis,
    wronskian,
)

__version__ = "0.1.0"

__all__ = [
    "BorelRiccatiError",
    "BranchContext", "FieldElem", "FieldTower", "GaussianRational",
    "Polynomial", "RationalFunction",
    "FormalSolution", "GevreyFit", "RiccatiEquation", "formal_borel_series",
    "formal_discriminant", "formal_solve", "gevrey_fit", "hypothesis_check",
    "leading_order", "residual_series",
    "HalfStrip", "LiouvilleFrame", "RayTrace", "liouville_map",
    "probe_halfstrip", "trace_ray", "turning_points",
    "BorelGrid", "StandardizedEquation", "convolve", "integral_op",
    "standardize", "successive_approx",
    "ExactSolutionSample", "GevreyRemainderReport", "LaplaceResult",
    "PipelineSettings", "Resummation", "XiPolynomial", "analytic_borel",
    "assemble_exact", "build_resummation", "gevrey_remainders",
    "ibp_identity_check", "laplace", "theta_sweep",
    "SchrodingerProblem", "WkbBasis", "WkbSolution", "check_wkb_hypotheses",
    "exact_wkb_basis", "wronskian",
    "__version__",
]
