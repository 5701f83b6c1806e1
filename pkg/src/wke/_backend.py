"""Selects the compiled core when importable; WKE_DISABLE_EXT=1 forces the numpy fallback."""
from __future__ import annotations

import os

from . import _core_py

BACKEND = "python"
core = _core_py

if os.environ.get("WKE_DISABLE_EXT", "") not in ("1", "true", "yes"):
    try:
        from . import _core as _compiled  # type: ignore[attr-defined]
    except ImportError:  # pragma: no cover - depends on build
        _compiled = None
    if _compiled is not None:
        core = _compiled
        BACKEND = "cython"


THREADS = max(1, int(os.environ.get("WKE_THREADS", "1") or 1))


def set_threads(n: int) -> None:
    """Thread count for the compiled collision kernel (results do not depend on it)."""
    global THREADS
    THREADS = max(1, int(n))


def collision_rates(m, x0, h, sigma, alpha=1.0, beta=1.0):
    if BACKEND == "cython":
        return core.collision_rates(m, float(x0), float(h), float(sigma), float(alpha), float(beta), THREADS)
    return core.collision_rates(m, float(x0), float(h), float(sigma), float(alpha), float(beta))


def mild_rates(x, wq, f, sigma, truncate=True):
    import numpy as np

    c = np.ascontiguousarray
    args = (c(x, dtype=float), c(wq, dtype=float), c(f, dtype=float), float(sigma), bool(truncate))
    if BACKEND == "cython":
        return core.mild_rates(*args, THREADS)
    return core.mild_rates(*args)
