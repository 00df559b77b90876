"""Physical constants used by default configurations. Units: km, s, rad."""

MU_EARTH = 398600.4418
"""Earth gravitational parameter, km^3/s^2."""

MU_SUN = 1.32712440018e11
"""Sun gravitational parameter, km^3/s^2."""

AU_KM = 1.495978707e8
"""Astronomical unit, km."""
