"""Time-varying ARCH(p): simulation, local quasi-likelihood fitting and limit-theory checks."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("tvarch")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from tvarch.exceptions import (
    AssumptionViolation,
    BoundaryViolation,
    ConfigError,
    ExperimentFailed,
    InfeasibleOmega,
    NotConverged,
    NotDifferentiable,
    SingularSigma,
    StencilOutOfRange,
    TvArchError,
    UnsupportedLaw,
)
from tvarch.kernel import KernelSpec, kernel_moments, weights
from tvarch.model import (
    InnovationLaw,
    LagWeights,
    OmegaSpace,
    ParameterCurve,
    Regularity,
    TvArchSpec,
    assumption_report,
    build_spec,
    eval_coefficients,
    omega_project,
    validate_moment_conditions,
)
from tvarch.rng import derive_seed

__all__ = [
    "AssumptionViolation",
    "BoundaryViolation",
    "ConfigError",
    "ExperimentFailed",
    "InfeasibleOmega",
    "InnovationLaw",
    "KernelSpec",
    "LagWeights",
    "NotConverged",
    "NotDifferentiable",
    "OmegaSpace",
    "ParameterCurve",
    "Regularity",
    "SingularSigma",
    "StencilOutOfRange",
    "TvArchError",
    "TvArchSpec",
    "UnsupportedLaw",
    "__version__",
    "assumption_report",
    "build_spec",
    "derive_seed",
    "eval_coefficients",
    "kernel_moments",
    "omega_project",
    "validate_moment_conditions",
    "weights",
]
