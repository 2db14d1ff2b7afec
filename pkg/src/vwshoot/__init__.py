"""Guiding-function pairs, topological shooting and bound certificates for
nonautonomous ODE systems."""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
