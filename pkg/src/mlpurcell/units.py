"""Spectroscopic unit conversions.

Energies are wavenumbers (cm^-1), times are picoseconds. An energy ``E`` in
cm^-1 corresponds to the angular frequency ``2*pi*c*E`` in rad/ps.
"""

import math

from scipy import constants

#: speed of light in cm/ps
C_CM_PER_PS = constants.c * 1e2 * 1e-12
#: rad/ps per cm^-1
TWO_PI_C = 2.0 * math.pi * C_CM_PER_PS
#: Boltzmann constant in cm^-1 / K
KB_CM_PER_K = constants.physical_constants["Boltzmann constant in inverse meter per kelvin"][0] / 100.0


def rate_convert(value):
    """Convert a rate in ps^-1 to cm^-1."""
    if value < 0:
        raise ValueError(f"rate must be non-negative, got {value}")
    return value / TWO_PI_C


def rate_to_ps(value):
    """Inverse of :func:`rate_convert`: cm^-1 to ps^-1."""
    if value < 0:
        raise ValueError(f"rate must be non-negative, got {value}")
    return value * TWO_PI_C


def kT(temperature):
    """Thermal energy in cm^-1."""
    return KB_CM_PER_K * temperature


def bose_occupation(freq, temperature):
    """Bose-Einstein occupation of a mode of frequency ``freq`` (cm^-1).

    Returns 0 at zero temperature.
    """
    if freq <= 0:
        raise ValueError(f"mode frequency must be positive, got {freq}")
    if temperature < 0:
        raise ValueError(f"temperature must be non-negative, got {temperature}")
    if temperature == 0:
        return 0.0
    x = freq / kT(temperature)
    if x > 700.0:
        return math.exp(-x)
    return 1.0 / math.expm1(x)
