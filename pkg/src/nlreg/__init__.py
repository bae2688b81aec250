"""Numerical toolkit for nonlocal operators with weakly singular jump kernels.

The package certifies structural conditions of a kernel density (small-jump
integrability, non-integrability at the origin, radial doubling, variation
control, asymmetry control), derives the constant bundle of a growth lemma and
an explicit modulus of continuity from them, solves 1D nonlocal Dirichlet
problems with a P1 Galerkin scheme, and runs verification experiments tying
the measured behavior of discrete solutions back to the predicted estimates.
"""

from nlreg.kernels import (
    KernelSpec,
    TwoPointKernel,
    build_kernel,
    decompose,
    kernel_from_text,
    kernel_to_text,
)

__all__ = [
    "KernelSpec",
    "TwoPointKernel",
    "build_kernel",
    "decompose",
    "kernel_from_text",
    "kernel_to_text",
]

__version__ = "0.1.0"
