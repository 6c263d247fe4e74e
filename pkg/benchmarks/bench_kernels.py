"""Timing of the dense boundary kernels: compiled extension against NumPy.

Run with ``python benchmarks/bench_kernels.py [--edges 256 512 1024]``.
"""
import argparse
import time

import numpy as np

from febe import kernels
from febe.quadrature import gauss_legendre


def circle_panels(n, radius=0.4):
    t = 2 * np.pi * np.arange(n + 1) / n
    pts = radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    return pts[:-1].copy(), pts[1:].copy()


def workload(n, order=8):
    a, b = circle_panels(n)
    s, w = gauss_legendre(order)
    xq = (a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]).reshape(-1, 2)
    L = np.linalg.norm(b - a, axis=1)
    wq = (L[:, None] * w[None, :]).ravel()
    owner = np.repeat(np.arange(n), order)
    dens = np.cos(np.arange(n))
    return dict(xq=xq, wq=wq, owner=owner, a=a, b=b, dens=dens, n=n)


def run(mod, d):
    mod.slp_galerkin(d["xq"], d["wq"], d["owner"], d["n"], d["a"], d["b"])
    mod.dlp_galerkin(d["xq"], d["wq"], d["owner"], d["n"], d["a"], d["b"])
    mod.slp_grad_apply(d["xq"], d["owner"], d["a"], d["b"], d["dens"])
    mod.dlp_grad_apply(d["xq"], d["owner"], d["a"], d["b"], d["dens"], np.roll(d["dens"], -1))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--edges", type=int, nargs="+", default=[128, 256, 512, 1024])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    mods = kernels.backends()
    print(f"backends available: {', '.join(mods)} (active: {kernels.BACKEND})")
    print(f"{'edges':>6} " + " ".join(f"{name + ' [s]':>12}" for name in mods) + f" {'speedup':>8}")
    for n in args.edges:
        d = workload(n)
        times = {name: best_of(lambda m=m: run(m, d), args.repeat) for name, m in mods.items()}
        speed = times["numpy"] / times["cython"] if "cython" in times else float("nan")
        print(f"{n:>6} " + " ".join(f"{t:12.4f}" for t in times.values()) + f" {speed:8.2f}")


if __name__ == "__main__":
    main()
