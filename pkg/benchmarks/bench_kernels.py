"""Compare the numba and numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--paths N] [--repeat R]

Times the ball reflection, the composite resolvent and one small
forward + backward run per backend, and checks that both backends agree.
"""
import argparse
import time

import numpy as np

from reflavg import _accel, kernels
from reflavg.backward import solve
from reflavg.coefficients import make_model
from reflavg.domain import make_interval_domain
from reflavg.forward import TimeGrid, simulate
from reflavg.potentials import positive_part_potential


def best_of(fn, repeat):
    fn()  # warm-up (includes JIT compilation for numba)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(n):
    rng = np.random.default_rng(0)
    xt = rng.normal(0, 1.5, (n, 3))
    v = rng.normal(0, 2, (n, 1))
    wa = np.full(n, 1e-3)
    wb = np.where(rng.random(n) < 0.1, rng.uniform(0, 0.05, n), 0.0)
    pa, pb = positive_part_potential(1, 1.0), positive_part_potential(1, 0.5)
    model = make_model("periodic_linear_1d")
    dom = make_interval_domain(-1, 1)
    grid = TimeGrid(0.0, 0.25, 250)

    def pipeline():
        ens = simulate(dom, model, 0.1, grid, [0.5], min(n, 20_000), 1)
        return solve(ens, model, pa, pb, domain=dom).Y_start

    return {
        "reflect_ball": lambda: kernels.reflect_ball(xt, np.zeros(3), 1.0)[0],
        "resolvent": lambda: kernels.resolvent_decoupled(v, wa, wb, pa.code, pa.params,
                                                         pb.code, pb.params)[0],
        "forward+backward": pipeline,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = [b for b in _accel.BACKENDS if b == "numpy" or _accel.HAVE_NUMBA]
    results = {}
    for name in backends:
        prev = _accel.set_backend(name)
        try:
            results[name] = {k: best_of(fn, args.repeat) for k, fn in cases(args.paths).items()}
        finally:
            _accel.set_backend(prev)

    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for k in results[backends[0]]:
        row = [results[b][k][0] for b in backends]
        speed = f"{row[-1] / row[0]:>9.1f}x" if len(row) == 2 else ""
        print(f"{k:<18}" + "".join(f"{t * 1e3:>10.1f}ms" for t in row) + speed)
        if len(backends) == 2:
            diff = np.max(np.abs(np.asarray(results["numba"][k][1])
                                 - np.asarray(results["numpy"][k][1])))
            print(f"{'':<18}max backend difference {diff:.1e}")


if __name__ == "__main__":
    main()
