"""Per-tick hot kernels: lidar ray casting and point clustering.

Two interchangeable backends: a Cython extension (built at install time when
a compiler is available) and a numpy fallback. Both evaluate the same
floating-point expressions in the same order, so they return bit-identical
results — run logs do not depend on which backend happened to load.

Selection: FAILOP_KERNELS=auto|compiled|pure (default auto).
"""

from __future__ import annotations

import os

_choice = os.environ.get("FAILOP_KERNELS", "auto")
if _choice not in ("auto", "compiled", "pure"):
    raise RuntimeError(f"FAILOP_KERNELS must be auto|compiled|pure, got {_choice!r}")

if _choice == "pure":
    from . import pure as _impl
    BACKEND = "pure"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        if _choice == "compiled":
            raise RuntimeError("FAILOP_KERNELS=compiled but the extension is not built")
        from . import pure as _impl
        BACKEND = "pure"

scan_rays = _impl.scan_rays
cluster_labels = _impl.cluster_labels

__all__ = ["scan_rays", "cluster_labels", "BACKEND"]
