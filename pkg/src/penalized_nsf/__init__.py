"""Fictitious-domain solver for a penalized heat-conducting compressible fluid around a moving body."""

__version__ = "0.1.0"
