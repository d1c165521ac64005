"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat R]

Each workload runs once per backend on identical seeds; outputs are compared
for bit-identity before timings are reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fwemerge.kernels import backend_module, compiled_available
from fwemerge.params import SeedSpec, derive_stream


def _diffusion(mod, rng):
    x = np.zeros(64 * 256)
    imm = np.full(64, 0.01)
    for _ in range(200):
        mod.diffusion_step(x, imm, 256, 1.01, 1.0, 1.0, 0.01, 0.08, 1, rng)
    return x


def _dual(mod, rng):
    counts = np.zeros(4096, dtype=np.int64)
    birth = np.zeros(4096)
    part = np.zeros(1 << 16, dtype=np.int64)
    counts[0] = 1
    rec = np.linspace(0.0, 30.0, 9)
    rpi, rk, rint = np.zeros(9), np.zeros(9, dtype=np.int64), np.zeros(9)
    out = mod.dual_advance(counts, birth, part, 1, 1, 0.0, 30.0, rec, 0, rpi, rk, rint, 0.0,
                           1.0, 1.0, 1.0, 0, 2000, False, rng)
    return np.concatenate([rpi, rk.astype(float), rint, [out[0]]])


def _bd_chain(mod, rng):
    return mod.bd_chain_sample(1, 1.0, 1.0, 1.0, True, np.linspace(0, 4, 5), 2000, rng)


WORKLOADS = {
    "diffusion_step (64 x 256 sites, 200 steps)": _diffusion,
    "dual_advance (collision-free to 2000 sites)": _dual,
    "bd_chain_sample (2000 chains to t=4)": _bd_chain,
}


def run(repeat: int) -> None:
    backends = ["python"] + (["compiled"] if compiled_available() else [])
    if len(backends) == 1:
        print("compiled extension not built; timing the Python fallback only")
    print(f"{'workload':48s} " + " ".join(f"{b:>12s}" for b in backends) + "     speedup")
    for name, fn in WORKLOADS.items():
        best, outs = {}, {}
        for b in backends:
            mod = backend_module(b)
            times = []
            for _ in range(repeat):
                rng = derive_stream(SeedSpec(1, 0, "bench"))
                t0 = time.perf_counter()
                outs[b] = fn(mod, rng)
                times.append(time.perf_counter() - t0)
            best[b] = min(times)
        if len(backends) == 2 and not np.array_equal(outs["python"], outs["compiled"]):
            raise SystemExit(f"{name}: backends disagree")
        speed = f"{best['python'] / best['compiled']:9.1f}x" if len(backends) == 2 else ""
        print(f"{name:48s} " + " ".join(f"{best[b]:11.4f}s" for b in backends) + f"  {speed}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    run(parser.parse_args().repeat)


if __name__ == "__main__":
    main()
