"""Hermite-Galerkin study of the Maxwellian-molecule Boltzmann equation near equilibrium."""

__version__ = "0.1.0"

from .basis import (
    HermiteBasis,
    StateVector,
    admissible_sigma_interval,
    chi_square_product_gaussian,
    l1_estimate,
    product_gaussian_state,
    project_H0,
)
from .config import RunConfig, load_config, parse_config
from .dynamics import (
    Semigroup,
    Trajectory,
    decay_rate_fit,
    integrate,
    picard_solve,
    riccati_envelope,
    theorem_check,
)
from .estimator import GalerkinBoltzmann
from .kernel import (
    CollisionKernel,
    KernelError,
    builtin_kernel,
    check_kernel,
    family_kernel,
    parse_kernel,
    spectral_gap,
)
from .operators import LMatrix, RTensor, apply_R, assemble, mc_oracle, reference_entry

__all__ = [
    "HermiteBasis", "StateVector", "admissible_sigma_interval", "chi_square_product_gaussian",
    "l1_estimate", "product_gaussian_state", "project_H0", "RunConfig", "load_config",
    "parse_config", "Semigroup", "Trajectory", "decay_rate_fit", "integrate", "picard_solve",
    "riccati_envelope", "theorem_check", "GalerkinBoltzmann", "CollisionKernel", "KernelError",
    "builtin_kernel", "check_kernel", "family_kernel", "parse_kernel", "spectral_gap", "LMatrix",
    "RTensor", "apply_R", "assemble", "mc_oracle", "reference_entry",
]
