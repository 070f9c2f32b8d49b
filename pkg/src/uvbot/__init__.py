"""2D simulation and planning toolkit for a UV-C disinfection robot."""

__version__ = "0.1.0"
