"""Casimir interaction of a metallic sphere enclosed in a spherical cavity.

Exact mode-summation energies via translation matrices on the imaginary
frequency axis, proximity-force approximations with curvature
corrections, and the small-sphere (polarizable particle) expansion.
"""

__version__ = "1.0.0"

from .analysis import (
    CurveSample,
    FitResult,
    ForcePoint,
    central_difference,
    fit_energy_ansatz,
    fit_force_ansatz,
    fit_theta1_curve,
    force_from_ratio,
    theta1_from_fit,
)
from .cp import (
    CpCoefficients,
    DipoleTensors,
    cp_coefficients,
    cp_energy_spherical,
    cp_energy_tensor,
    zeta,
)
from .energy import (
    ExtrapolationResult,
    Geometry,
    QuadratureSpec,
    casimir_energy,
    energy_ladder,
    extrapolate_lmax,
    logdet_integrand,
)
from .errors import ConvergenceError, FitQualityWarning, NumericalRangeError
from .pfa import (
    PfaConfig,
    full_pfa_energy,
    full_pfa_force,
    pfa_force_limit,
    theta1_fpfa,
    theta2_fpfa_numeric,
)
from .scattering import (
    MaterialResponse,
    PolarizabilitySet,
    pec_polarizabilities,
    t_cavity,
    t_inner,
    t_multipole,
)
from .translation import BlockMatrix, ChannelIndex, b_coefficient, v_block

__all__ = [
    "BlockMatrix",
    "ChannelIndex",
    "ConvergenceError",
    "CpCoefficients",
    "CurveSample",
    "DipoleTensors",
    "ExtrapolationResult",
    "FitQualityWarning",
    "FitResult",
    "ForcePoint",
    "Geometry",
    "MaterialResponse",
    "NumericalRangeError",
    "PfaConfig",
    "PolarizabilitySet",
    "QuadratureSpec",
    "b_coefficient",
    "casimir_energy",
    "central_difference",
    "cp_coefficients",
    "cp_energy_spherical",
    "cp_energy_tensor",
    "energy_ladder",
    "extrapolate_lmax",
    "fit_energy_ansatz",
    "fit_force_ansatz",
    "fit_theta1_curve",
    "force_from_ratio",
    "full_pfa_energy",
    "full_pfa_force",
    "logdet_integrand",
    "pec_polarizabilities",
    "pfa_force_limit",
    "t_cavity",
    "t_inner",
    "t_multipole",
    "theta1_fpfa",
    "theta1_from_fit",
    "theta2_fpfa_numeric",
    "v_block",
    "zeta",
    "__version__",
]
