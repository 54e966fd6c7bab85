"""Multi-level Purcell effect in a vibronic dimer coupled to a lossy cavity.

Modules: ``hilbert`` (tensor spaces), ``models`` (JC and dimer
Hamiltonians), ``dissipators`` (jump channels), ``dynamics`` (Lindblad
propagation and Purcell fits), ``spectra`` (effective-Hamiltonian branch
tracking), ``reduced`` (three-state analytic model) and ``cli``.
"""

from .errors import (
    AmbiguityError,
    ConfigError,
    FitError,
    InvalidDimensionError,
    MLPurcellError,
    NumericalError,
    UnsupportedConfigurationError,
)
from .models import DimerParams, JCParams, build_dimer, build_jc
from .units import TWO_PI_C, rate_convert

__version__ = "0.1.0"

__all__ = [
    "AmbiguityError",
    "ConfigError",
    "FitError",
    "InvalidDimensionError",
    "MLPurcellError",
    "NumericalError",
    "UnsupportedConfigurationError",
    "DimerParams",
    "JCParams",
    "build_dimer",
    "build_jc",
    "TWO_PI_C",
    "rate_convert",
]
