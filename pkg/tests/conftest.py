import numpy as np
import pytest

from reflavg import _accel
from reflavg.coefficients import CoefficientSet


def available_backends():
    return [b for b in _accel.BACKENDS if b == "numpy" or _accel.HAVE_NUMBA]


@pytest.fixture(params=available_backends())
def backend(request):
    prev = _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(prev)


def constant_set(m=1, d=1, drift=None, sigma=None, f=None, g=None, terminal=None, **kw):
    """Time-homogeneous coefficient set built from plain batched callables.

    Omitted pieces default to zero drift, identity diffusion, zero drivers and
    a zero terminal value.
    """
    eye = np.eye(m)
    b = drift or (lambda s, x: np.zeros_like(x))
    sig = sigma or (lambda s, x: np.broadcast_to(eye, (x.shape[0], m, m)).copy())
    ff = f or (lambda s, x, y: np.zeros_like(y))
    gg = g or (lambda s, x, y: np.zeros_like(y))
    term = terminal or (lambda x: np.zeros((x.shape[0], d)))
    kw.setdefault("time_homogeneous", True)
    return CoefficientSet(m, d, b, sig, ff, gg, term, **kw)
