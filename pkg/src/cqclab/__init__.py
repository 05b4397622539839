"""Collapse-model (CSL / quantized-field) simulation and verification toolkit."""

__version__ = "0.1.0"

from .linalg import DensityMatrix, HermitianOperator, NumericalError, StateVector, ValidationError  # noqa: E402

__all__ = ["DensityMatrix", "HermitianOperator", "NumericalError", "StateVector", "ValidationError", "__version__"]
