"""Numerical laboratory for Kähler potentials on flat complex tori."""

from .errors import LabError
from .field import GridSpec, HermitianField, ScalarField
from .geometry import KahlerState, TwistData, make_state

__all__ = ["GridSpec", "HermitianField", "KahlerState", "LabError", "ScalarField", "TwistData", "make_state"]
__version__ = "0.1.0"
