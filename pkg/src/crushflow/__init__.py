"""Explicit divergence-free field whose flow crushes the torus onto a Cantor set."""
from .cantor import THETA, Address, phi
from .field import (ConstructionField, Params, ReversedField, SteadyField, StageField, make_field,
                    tau)
from .flowmap import Trajectory, crush_map, integrate, translate_crush

__all__ = [
    "THETA", "Address", "phi", "ConstructionField", "Params", "ReversedField", "SteadyField",
    "StageField", "make_field", "tau", "Trajectory", "crush_map", "integrate", "translate_crush",
]
