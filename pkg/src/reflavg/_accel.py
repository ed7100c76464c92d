"""Backend selection for the hot kernels.

The compiled path uses numba; the fallback is plain vectorized numpy.  The
initial choice comes from the ``REFLAVG_BACKEND`` environment variable
(``numba`` or ``numpy``); ``REFLAVG_DISABLE_NUMBA=1`` is accepted as a
shorthand for ``numpy``.  Without numba installed the numpy path is used.
"""
import os

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

BACKENDS = ("numba", "numpy")


def _initial_backend():
    name = os.environ.get("REFLAVG_BACKEND", "").strip().lower()
    if os.environ.get("REFLAVG_DISABLE_NUMBA", "") not in ("", "0"):
        name = "numpy"
    if not name:
        name = "numba"
    if name not in BACKENDS:
        raise ValueError(f"REFLAVG_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        name = "numpy"
    return name


_backend = _initial_backend()


def get_backend():
    return _backend


def set_backend(name):
    """Switch the kernel backend at runtime; returns the previous name."""
    global _backend
    if name not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous, _backend = _backend, name
    return previous
