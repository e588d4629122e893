"""Hybrid quantum residual network simulator and reconstruction toolchain."""

__version__ = "0.1.0"

from .linalg import DensityMatrix, SimplexVector  # noqa: F401
