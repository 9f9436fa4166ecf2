"""Bowen-Series-like circle maps, their generator groups and dynamical graphs."""

from bsl_lab.combinatorics import Scheme, build_scheme, genus2_scheme
from bsl_lab.errors import BslError

__all__ = ["Scheme", "build_scheme", "genus2_scheme", "BslError"]
__version__ = "0.1.0"
