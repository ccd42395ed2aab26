"""Groupwise deformable image registration with an averaging network and
an edge-based loss, plus a synthetic motion phantom and evaluation tools."""

from groupreg.backend import BACKEND_NAME
from groupreg.tensor import Tensor

__version__ = "0.1.0"

__all__ = ["Tensor", "BACKEND_NAME", "__version__"]
