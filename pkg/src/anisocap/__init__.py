"""Anisotropic capillarity laboratory.

Wulff shapes, free energies of polygonal sets, mass-constrained
minimization and the stability diagnostics built on them.
"""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
