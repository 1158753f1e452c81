"""Per-step cost of the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 128 256] [--steps 200] [--repeat 3]
"""

import argparse
import timeit

import numpy as np

from ekch import backend
from ekch.ch import GL_NODES, GL_WEIGHTS
from ekch.grid import TorusGrid
from ekch.mollifier import build_kernel

POLY = (0.0, 0.0, 1.0, -2.0, 1.0)


def _cases(n: int):
    g = TorusGrid(1, n)
    k = build_kernel("quartic", 0.1, g)
    x = g.coords[0]
    rho = 0.5 + 0.1 * np.cos(2 * np.pi * x)
    m = (0.05 * rho * np.sin(2 * np.pi * x))[None]
    return {
        "nlch": (lambda mod: mod.NLCHEngine(1, n, g.L, k.hat, k.eta, backend.POT_POLY, POLY, 0.0, GL_NODES, GL_WEIGHTS),
                 lambda eng, s: eng.advance(rho, 1e-8, s)),
        "ek": (lambda mod: mod.EKEngine(1, n, g.L, k.hat, k.eta, 0.02, backend.POT_POLY, POLY, 0.0, 1e-10, True),
               lambda eng, s: eng.advance(rho, m, 1e-7, s)),
        "lch": (lambda mod: mod.LCHEngine(1, n, g.L, 1e-3, backend.POT_POLY, POLY),
                lambda eng, s: eng.advance(rho, 1e-7, s)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[128, 256])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    names = ["python"]
    try:
        backend.engines("compiled")
        names.insert(0, "compiled")
    except ImportError:
        print("compiled backend not built; timing the fallback only")
    print(f"{'system':6s} {'n':>5s} " + " ".join(f"{b + ' us/step':>18s}" for b in names) + "   speedup")
    for n in args.n:
        for system, (make, run) in _cases(n).items():
            per = []
            for b in names:
                eng = make(backend.engines(b))
                run(eng, 2)
                best = min(timeit.repeat(lambda: run(eng, args.steps), number=1, repeat=args.repeat))
                per.append(1e6 * best / args.steps)
            speed = f"{per[-1] / per[0]:9.1f}x" if len(per) == 2 else ""
            print(f"{system:6s} {n:5d} " + " ".join(f"{p:18.1f}" for p in per) + "  " + speed)


if __name__ == "__main__":
    main()
