"""Compiled kernels versus the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json]

Times each hot kernel under both backends on the same inputs, then one
small end-to-end minimization per backend (run in a subprocess so the
backend is picked at import, exactly as a user would get it).
"""

import argparse
import json
import math
import os
import subprocess
import sys
import timeit

import numpy as np

from anisocap import kernels
from anisocap.geom2d import regular_polygon
from anisocap.tension import Crystalline, Isotropic, PNorm

END_TO_END = """
import math, time
from anisocap import BACKEND
from anisocap.optimize import MinimizeConfig, minimize
from anisocap.potential import LinearGravity
from anisocap.tension import Isotropic
t = time.perf_counter()
minimize(MinimizeConfig(mass=math.pi, tension=Isotropic(1), potential=LinearGravity(0.5),
                        restarts=1, max_parts=1, max_iters=200))
print(BACKEND, time.perf_counter() - t)
"""


def _ring(n, seed=0):
    rng = np.random.default_rng(seed)
    th = np.sort(rng.uniform(0, 2 * math.pi, n))
    r = rng.uniform(0.7, 1.3, n)
    return np.ascontiguousarray(np.column_stack([r * np.cos(th), r * np.sin(th)]))


def cases():
    ring64, ring256 = _ring(64), _ring(256)
    offs64 = np.array([0, 64])
    vecs = np.ascontiguousarray(np.random.default_rng(1).normal(size=(4096, 2)))
    iso = Isotropic(1).kernel_spec()
    pn = PNorm(3).kernel_spec()
    tab = Crystalline(((1, 0), (0, 1), (-1, 0), (0, -1))).smoothed().kernel_spec()
    sq = np.ascontiguousarray(regular_polygon(64, 2.0).vertices)
    th = np.linspace(0, 2 * math.pi, 256, endpoint=False)
    nrm = np.ascontiguousarray(np.column_stack([np.cos(th), np.sin(th)]))
    off = np.ones(256)
    return {
        "polygon_area[256]": lambda k: k.polygon_area(ring256),
        "rings_intersect[64]": lambda k: k.rings_intersect(ring64, offs64, 0.0),
        "ear_clip[64]": lambda k: k.ear_clip(ring64),
        "clip_halfplanes[64x256]": lambda k: k.clip_halfplanes(sq, nrm, off),
        "tension_values/isotropic[4096]": lambda k: k.tension_values(vecs, *iso),
        "tension_values/table[4096]": lambda k: k.tension_values(vecs, *tab),
        "energy_grad/pnorm[256]": lambda k: k.tension_energy_grad(ring256, *pn, True),
        "energy_grad/table[256]": lambda k: k.tension_energy_grad(ring256, *tab, True),
    }


def bench(repeat):
    backends = kernels.backends()
    rows = []
    for name, fn in cases().items():
        row = {"kernel": name}
        for bname, mod in backends.items():
            n, _ = timeit.Timer(lambda: fn(mod)).autorange()
            best = min(timeit.repeat(lambda: fn(mod), number=n, repeat=repeat)) / n
            row[bname] = best
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        rows.append(row)
    e2e = {}
    for flag in ("1", "0"):
        env = dict(os.environ, ANISOCAP_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        e2e[out[0]] = float(out[1])
    return rows, e2e


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)
    rows, e2e = bench(args.repeat)
    if args.json:
        print(json.dumps({"kernels": rows, "end_to_end_seconds": e2e}, indent=2))
        return
    print(f"{'kernel':34s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for r in rows:
        cy = f"{r['cython'] * 1e6:10.1f}us" if "cython" in r else f"{'n/a':>12s}"
        sp = f"{r['speedup']:7.1f}x" if "speedup" in r else ""
        print(f"{r['kernel']:34s} {r['python'] * 1e6:10.1f}us {cy} {sp}")
    print("\nend-to-end minimize (1 run, 200 iterations):")
    for k, v in e2e.items():
        print(f"  {k:8s} {v:7.2f} s")


if __name__ == "__main__":
    main()
