"""Rolling-shutter structure from motion as self-calibration of an imaginary camera."""

__version__ = "0.1.0"
