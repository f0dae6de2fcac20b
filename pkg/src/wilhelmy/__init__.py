"""Quasi-static Wilhelmy-plate capillary evolution with contact-angle hysteresis."""

__version__ = "0.1.0"
