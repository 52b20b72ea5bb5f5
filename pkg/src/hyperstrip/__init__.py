"""Time-periodic solvers and stability certificates for first-order
hyperbolic systems on the strip [0, 1] x R with reflection boundary
coupling."""

from .certify import CertificationReport, LyapunovSpec, certify
from .ibvp import DecayEstimate, fit_decay, simulate, step
from .model import (
    BoundarySpec,
    GridFunction,
    LinearSystemSpec,
    QuasilinearSystemSpec,
    ValidationError,
    validate,
)
from .operators import reflection_norm
from .periodic import (
    RadiusError,
    SolveReport,
    manufactured_setup,
    mms_study,
    period_map,
    perturb_study,
    solve_linear_periodic,
    solve_quasilinear,
)

__version__ = "0.1.0"

__all__ = [
    "BoundarySpec",
    "CertificationReport",
    "DecayEstimate",
    "GridFunction",
    "LinearSystemSpec",
    "LyapunovSpec",
    "QuasilinearSystemSpec",
    "RadiusError",
    "SolveReport",
    "ValidationError",
    "certify",
    "fit_decay",
    "manufactured_setup",
    "mms_study",
    "period_map",
    "perturb_study",
    "reflection_norm",
    "simulate",
    "solve_linear_periodic",
    "solve_quasilinear",
    "step",
    "validate",
    "__version__",
]
