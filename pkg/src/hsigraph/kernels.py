"""Geometry kernel dispatch.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy versions in ``_kernels_py``.  Set ``HSIGRAPH_PURE=1`` to force the
fallback.  ``BACKEND`` names whichever was picked.
"""

import os

from . import _kernels_py

if os.environ.get("HSIGRAPH_PURE", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

ray_parity = _impl.ray_parity
ray_nearest = _impl.ray_nearest
voxelize = _impl.voxelize
