"""Maxwell transmission eigenvalues in 2D via the fixed-point formulation."""

__version__ = "0.1.0"
