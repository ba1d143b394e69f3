"""Backend selection for the hot kernels.

The compiled extension is preferred; set ``ANISOCAP_PURE_PYTHON=1`` to force
the NumPy fallback (useful for debugging and for the benchmark).
"""

import os

from . import _pykernels

if os.environ.get("ANISOCAP_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

KIND_ISOTROPIC = _pykernels.KIND_ISOTROPIC
KIND_PNORM = _pykernels.KIND_PNORM
KIND_CRYSTAL = _pykernels.KIND_CRYSTAL
KIND_TABLE = _pykernels.KIND_TABLE

polygon_area = _impl.polygon_area
rings_intersect = _impl.rings_intersect
ear_clip = _impl.ear_clip
clip_halfplanes = _impl.clip_halfplanes
tension_values = _impl.tension_values
tension_energy_grad = _impl.tension_energy_grad


def backends():
    """Both implementations, keyed by name (only the ones importable)."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out
