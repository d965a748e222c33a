"""Hot numeric kernels: compiled core with a NumPy fallback.

The compiled extension is picked at import time when present; setting
``EVS_NO_NATIVE=1`` forces the NumPy path. ``EVS_THREADS`` caps the
compiled kernels' parallelism (0 or unset means auto). Results are
independent of the thread count.
"""

import os

import numpy as np

from . import _numpy as numpy_backend

try:
    from . import _native as native_backend
except ImportError:  # pragma: no cover - depends on the build
    native_backend = None


def _native_disabled() -> bool:
    return os.environ.get("EVS_NO_NATIVE", "").strip() not in ("", "0")


_active = numpy_backend if (native_backend is None or _native_disabled()) else native_backend


def active_backend_name() -> str:
    return "native" if _active is native_backend else "numpy"


def available_backends() -> dict:
    backends = {"numpy": numpy_backend}
    if native_backend is not None:
        backends["native"] = native_backend
    return backends


def thread_count() -> int:
    """Worker count for the compiled kernels, from EVS_THREADS (0 = auto)."""
    raw = os.environ.get("EVS_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"EVS_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError(f"EVS_THREADS must be >= 0, got {n}")
    if n == 0:
        return os.cpu_count() or 1
    return n


def patch_mean_abs_diff(frames: np.ndarray, patch: int) -> np.ndarray:
    return _active.patch_mean_abs_diff(
        np.ascontiguousarray(frames), patch, num_threads=thread_count()
    )


def cosine_dissimilarity(grid: np.ndarray) -> np.ndarray:
    return _active.cosine_dissimilarity(
        np.ascontiguousarray(grid), num_threads=thread_count()
    )
