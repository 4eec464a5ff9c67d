"""Forward and inverse machinery for monochromatic acoustic scattering with logarithmic stability checks."""
__version__ = "0.1.0"

from .errors import (AdmissibilityError, ConfigError, ScatterLabError, SolverError, SupportError,
                     VerificationError)
from .medium import Bump, Grid3, Potential, RefractiveIndex, make_phantom, potential_of

__all__ = [
    "__version__", "AdmissibilityError", "ConfigError", "ScatterLabError", "SolverError",
    "SupportError", "VerificationError", "Bump", "Grid3", "Potential", "RefractiveIndex",
    "make_phantom", "potential_of",
]
