"""Binary path dump.

Layout, all little-endian, row-major:

* header: ``m``, ``n_paths``, ``n_steps`` as int64, then ``dt`` as float64;
* ``X``: float64 array (n_paths, n_steps + 1, m);
* ``dK``: float64 array (n_paths, n_steps, m);
* ``K_var``: float64 array (n_paths, n_steps + 1).
"""
import struct

import numpy as np

from .errors import InvalidArgument

_HEADER = struct.Struct("<qqqd")


def write_path_dump(path, ensemble):
    n, N1, m = ensemble.X.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(m, n, N1 - 1, float(ensemble.grid.dt)))
        for arr in (ensemble.X, ensemble.dK, ensemble.K_var):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_path_dump(path):
    """Returns ``(header, X, dK, K_var)`` with header a dict of m, n_paths, n_steps, dt."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise InvalidArgument(f"{path}: truncated header")
        m, n, N, dt = _HEADER.unpack(raw)
        sizes = [(n, N + 1, m), (n, N, m), (n, N + 1)]
        arrays = []
        for shape in sizes:
            count = int(np.prod(shape))
            arr = np.frombuffer(fh.read(8 * count), dtype="<f8")
            if arr.size != count:
                raise InvalidArgument(f"{path}: truncated array data")
            arrays.append(arr.reshape(shape).astype(float))
    return {"m": m, "n_paths": n, "n_steps": N, "dt": dt}, *arrays
