"""Hyperbolicity testing for real homogeneous polynomials."""

from .polyring import MultiPoly, format_poly, normalize_at_point, parse_poly

__all__ = ["MultiPoly", "format_poly", "normalize_at_point", "parse_poly"]
__version__ = "0.1.0"
